"""Closed-loop simulation: scenarios, assembly, integration and metrics."""

from .run import (
    CSV_HEADER,
    Metrics,
    RunResult,
    TrajectoryRecord,
    evaluate,
    fit_decay_rate,
    integrate,
    integrate_generator,
    run_scenario,
    synthesize_scenario,
    write_outputs,
)
from .scenario import Scenario, instantiate, load_bundled, load_scenario, scenario_from_dict

__all__ = [
    "CSV_HEADER",
    "Metrics",
    "RunResult",
    "Scenario",
    "TrajectoryRecord",
    "evaluate",
    "fit_decay_rate",
    "instantiate",
    "integrate",
    "integrate_generator",
    "load_bundled",
    "load_scenario",
    "run_scenario",
    "scenario_from_dict",
    "synthesize_scenario",
    "write_outputs",
]
