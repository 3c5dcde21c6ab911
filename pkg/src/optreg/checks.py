"""Structural pre-flight checks for a scenario."""

from __future__ import annotations

from dataclasses import dataclass

from .costs import validate_bounds
from .errors import OptRegError
from .graph import is_connected
from .plant import check_minimal, check_observable, normal_form, regulator_rank_check, relative_degree


@dataclass(frozen=True)
class CheckResult:
    name: str
    agent: int | None
    passed: bool
    required: bool
    detail: str = ""

    def line(self) -> str:
        who = "network" if self.agent is None else f"agent {self.agent + 1}"
        status = "PASS" if self.passed else ("FAIL" if self.required else "warn")
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status:4s}  {self.name:<22s} {who}{extra}"


def check_scenario(s) -> list[CheckResult]:
    out = [CheckResult("connectivity", None, is_connected(s.graph), True, "" if is_connected(s.graph) else "graph not connected")]
    needs_hg = s.law.kind == "realtime_gradient"
    for i, a in enumerate(s.agents):
        p, dist, cost = a.plant, a.disturbance, a.cost
        ok = validate_bounds(cost)
        out.append(CheckResult("convexity_bounds", i, ok, True, f"[{cost.h_lo:.4g}, {cost.h_hi:.4g}] on {list(cost.interval)}"))
        out.append(CheckResult("regulator_rank", i, regulator_rank_check(p, dist.S), True))
        out.append(CheckResult("minimality", i, check_minimal(p), True))
        out.append(CheckResult("exosystem_observable", i, check_observable(p.E, dist.S), True))
        try:
            r = relative_degree(p)
            out.append(CheckResult("relative_degree", i, True, needs_hg, f"r={r}"))
        except OptRegError as exc:
            out.append(CheckResult("relative_degree", i, False, needs_hg, str(exc)))
            continue
        try:
            nf = normal_form(p)
            out.append(CheckResult("minimum_phase", i, nf.minimum_phase, needs_hg))
        except OptRegError as exc:
            out.append(CheckResult("minimum_phase", i, False, needs_hg, str(exc)))
    return out


def failures(results: list[CheckResult]) -> list[CheckResult]:
    return [r for r in results if r.required and not r.passed]
