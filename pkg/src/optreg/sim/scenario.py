"""Scenario documents: JSON schema, loading and per-run instantiation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..costs import PARAM_NAMES, AllocationProblem, LocalCost
from ..errors import ScenarioError
from ..graph import SharingGraph
from ..plant import AgentPlant, DisturbanceModel
from ..synthesis import LAWS

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_poles = {
    "type": "object",
    "properties": {k: {"type": ["array", "null"], "items": {"type": "number"}} for k in ("k1", "lbar", "lhat")},
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["graph", "agents", "law", "integration"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "graph": {
            "type": "object",
            "required": ["n", "edges"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "edges": {
                    "type": "array",
                    "items": {"type": "array", "minItems": 2, "maxItems": 3, "items": {"type": "number"}},
                },
            },
        },
        "law": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(LAWS)},
                "rejection_enabled_from": {"type": "number"},
                "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "c": _vector,
            },
        },
        "poles": _poles,
        "integration": {
            "type": "object",
            "required": ["t_end", "dt"],
            "properties": {
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "decimate": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "initial": {
            "type": "object",
            "properties": {"uniform": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}},
        },
        "axes": {"type": "integer", "minimum": 1},
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["t", "action"],
                "properties": {
                    "t": {"type": "number", "minimum": 0},
                    "action": {"enum": ["enable_disturbance", "enable_rejection"]},
                },
            },
        },
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["plant", "cost"],
                "properties": {
                    "plant": {
                        "type": "object",
                        "required": ["A", "B", "C"],
                        "properties": {"A": _matrix, "B": _matrix, "C": _matrix, "E": _matrix},
                    },
                    "disturbance": {
                        "type": "object",
                        "required": ["S", "w0"],
                        "properties": {"S": _matrix, "w0": _vector, "enabled_from": {"type": "number"}},
                    },
                    "cost": {
                        "type": "object",
                        "required": ["kind", "d"],
                        "properties": {
                            "kind": {"enum": list(PARAM_NAMES)},
                            "d": {"anyOf": [{"type": "number"}, {"const": "y0"}]},
                            "h_lo": {"type": "number"},
                            "h_hi": {"type": "number"},
                            "interval": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}},
                        },
                    },
                    "x0": _vector,
                    "xi0": _vector,
                    "poles": _poles,
                },
            },
        },
        "generator": {
            "type": "object",
            "properties": {"z0": _vector, "lam0": _vector, "v0": _vector},
        },
    },
}


@dataclass(frozen=True)
class AgentSpec:
    plant: AgentPlant
    disturbance: DisturbanceModel
    cost: LocalCost
    d_from_output: bool = False
    x0: np.ndarray | None = None
    xi0: np.ndarray | None = None
    poles: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LawSpec:
    kind: str = "state_feedback"
    rejection_enabled_from: float = 0.0
    eps: float = 0.1
    c: tuple | None = None


@dataclass(frozen=True)
class Scenario:
    graph: SharingGraph
    agents: tuple
    law: LawSpec
    t_end: float
    dt: float
    name: str = "scenario"
    decimate: int = 10
    seed: int = 0
    events: tuple = ()
    axes: int = 1
    initial_range: tuple = (-1.0, 1.0)
    poles: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < self.dt:
            raise ScenarioError("need dt > 0 and t_end >= dt")
        if len(self.agents) != self.graph.n:
            raise ScenarioError(f"{len(self.agents)} agents but graph has n={self.graph.n}")
        if self.law.kind == "realtime_gradient" and self.dt > self.law.eps / 50 * (1 + 1e-12):
            raise ScenarioError(
                f"dt={self.dt} too coarse for the high-gain loop; need dt <= eps/50 = {self.law.eps / 50:g}"
            )

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def with_overrides(self, **kw) -> "Scenario":
        """Replace top-level fields; ``eps``/``c``/``rejection_enabled_from`` go to the law."""
        law_kw = {k: kw.pop(k) for k in ("eps", "c", "rejection_enabled_from") if k in kw}
        law = replace(self.law, **law_kw) if law_kw else self.law
        return replace(self, law=law, **kw)

    def agent_poles(self, i: int) -> dict:
        out = {k: v for k, v in self.poles.items() if v is not None}
        out.update({k: v for k, v in self.agents[i].poles.items() if v is not None})
        return out

    def disturbance_times(self) -> list[float]:
        times = [a.disturbance.enabled_from for a in self.agents]
        for ev in self.events:
            if ev["action"] == "enable_disturbance":
                times = [float(ev["t"])] * len(times)
        return times

    def rejection_time(self) -> float:
        t = self.law.rejection_enabled_from
        for ev in self.events:
            if ev["action"] == "enable_rejection":
                t = float(ev["t"])
        return t


def _cost_from_json(doc: dict) -> tuple[LocalCost, bool]:
    kind = doc["kind"]
    names = PARAM_NAMES[kind]
    missing = [k for k in names if k not in doc]
    if missing:
        raise ScenarioError(f"{kind} cost missing parameters {missing}")
    d = doc["d"]
    from_output = d == "y0"
    kw = {k: doc[k] for k in ("h_lo", "h_hi") if k in doc}
    if "interval" in doc:
        kw["interval"] = tuple(doc["interval"])
    cost = LocalCost(kind, tuple(doc[k] for k in names), 0.0 if from_output else float(d), **kw)
    return cost, from_output


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ScenarioError(f"schema violation at '{path}': {exc.message}") from exc
    try:
        g = doc["graph"]
        graph = SharingGraph.from_edges(int(g["n"]), g["edges"])
        agents = []
        for k, a in enumerate(doc["agents"]):
            pl = a["plant"]
            n = len(pl["A"])
            plant = AgentPlant(pl["A"], pl["B"], pl["C"], pl.get("E", np.zeros((n, 0))))
            dist_doc = a.get("disturbance")
            if dist_doc is None:
                dist = DisturbanceModel.none()
            else:
                dist = DisturbanceModel(dist_doc["S"], dist_doc["w0"], float(dist_doc.get("enabled_from", 0.0)))
            if dist.q != plant.q:
                raise ScenarioError(f"agent {k + 1}: E has {plant.q} columns but S is {dist.q}x{dist.q}")
            cost, from_output = _cost_from_json(a["cost"])
            x0 = None if "x0" not in a else np.asarray(a["x0"], dtype=float)
            if x0 is not None and x0.size != plant.n:
                raise ScenarioError(f"agent {k + 1}: x0 has length {x0.size}, plant order is {plant.n}")
            xi0 = None if "xi0" not in a else np.asarray(a["xi0"], dtype=float)
            agents.append(AgentSpec(plant, dist, cost, from_output, x0, xi0, dict(a.get("poles", {}))))
        law_doc = doc["law"]
        law = LawSpec(
            kind=law_doc["kind"],
            rejection_enabled_from=float(law_doc.get("rejection_enabled_from", 0.0)),
            eps=float(law_doc.get("eps", 0.1)),
            c=None if "c" not in law_doc else tuple(float(v) for v in law_doc["c"]),
        )
        integ = doc["integration"]
        return Scenario(
            graph=graph,
            agents=tuple(agents),
            law=law,
            t_end=float(integ["t_end"]),
            dt=float(integ["dt"]),
            name=doc.get("name", "scenario"),
            decimate=int(integ.get("decimate", 10)),
            seed=int(integ.get("seed", 0)),
            events=tuple(doc.get("events", ())),
            axes=int(doc.get("axes", 1)),
            initial_range=tuple(doc.get("initial", {}).get("uniform", (-1.0, 1.0))),
            poles=dict(doc.get("poles", {})),
            generator=dict(doc.get("generator", {})),
        )
    except ScenarioError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON: {exc}") from exc
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc)


def bundled_path(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``"example2"``."""
    stem = name if name.endswith(".json") else f"{name}.json"
    return Path(str(resources.files("optreg") / "scenarios" / stem))


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_path(name))


@dataclass(frozen=True)
class RunInstance:
    """One concrete run: initial plant states and the resolved allocation problem."""

    axis: int
    x0: tuple
    xi0: tuple
    problem: AllocationProblem
    z0: np.ndarray
    lam0: np.ndarray
    v0: np.ndarray


def instantiate(s: Scenario, seed: int | None = None) -> list[RunInstance]:
    """Draw initial conditions (one set per axis) and resolve ``d = y(0)`` costs."""
    rng = np.random.default_rng(s.seed if seed is None else seed)
    lo, hi = s.initial_range
    runs = []
    for axis in range(s.axes):
        x0s, xi0s, costs = [], [], []
        for a in s.agents:
            x0 = a.x0 if a.x0 is not None else rng.uniform(lo, hi, a.plant.n)
            x0s.append(np.asarray(x0, dtype=float))
            xi0s.append(np.zeros(a.plant.n) if a.xi0 is None else np.asarray(a.xi0, dtype=float))
            cost = a.cost
            if a.d_from_output:
                cost = replace(cost, d=float(a.plant.C[0] @ x0s[-1]))
            costs.append(cost)
        problem = AllocationProblem(tuple(costs))
        gen = s.generator
        z0 = np.asarray(gen.get("z0", problem.d), dtype=float)
        lam0 = np.asarray(gen.get("lam0", np.zeros(s.n)), dtype=float)
        v0 = np.asarray(gen.get("v0", np.zeros(s.n)), dtype=float)
        for name, vec in (("z0", z0), ("lam0", lam0), ("v0", v0)):
            if vec.shape != (s.n,):
                raise ScenarioError(f"generator.{name} must have length {s.n}")
        runs.append(RunInstance(axis, tuple(x0s), tuple(xi0s), problem, z0, lam0, v0))
    return runs
