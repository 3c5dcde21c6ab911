"""Closed-loop integration, metrics and CSV output."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..costs import AllocationProblem
from ..errors import NonFiniteState
from ..generator import GeneratorState, kkt_check, solve_allocation_oracle
from ..graph import LaplacianBundle, laplacian
from ..synthesis import AgentGains, synthesize_agent
from .closed_loop import ClosedLoop
from .kernels import rk4_affine
from .scenario import RunInstance, Scenario, instantiate

CSV_HEADER = "t,agent,y,z,lambda,u,eta_err"


def synthesize_scenario(s: Scenario, seed: int = 0) -> list[AgentGains]:
    out = []
    for i, a in enumerate(s.agents):
        poles = s.agent_poles(i)
        out.append(
            synthesize_agent(
                a.plant,
                a.disturbance.S,
                law=s.law.kind,
                k1_poles=poles.get("k1"),
                lbar_poles=poles.get("lbar"),
                lhat_poles=poles.get("lhat"),
                eps=s.law.eps,
                c=s.law.c,
                seed=seed + i,
            )
        )
    return out


def _first_step(t: float, dt: float) -> int:
    """First grid index whose time is at or after ``t``."""
    return max(0, int(math.ceil(t / dt - 1e-9)))


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    y: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    v: np.ndarray
    u: np.ndarray
    eta_err: np.ndarray
    states: np.ndarray = field(repr=False)
    axis: int = 0

    @property
    def n_agents(self) -> int:
        return self.y.shape[1]

    def to_csv(self, path) -> None:
        T, N = self.y.shape
        t = np.repeat(self.times, N)
        agent = np.tile(np.arange(1, N + 1), T)
        cols = [self.y, self.z, self.lam, self.u, self.eta_err]
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            data = np.column_stack([t] + [c.reshape(-1) for c in cols])
            for row, a in zip(data, agent):
                fh.write(
                    f"{row[0]:.10e},{a},{row[1]:.10e},{row[2]:.10e},{row[3]:.10e},{row[4]:.10e},{row[5]:.10e}\n"
                )


def build_closed_loop(s: Scenario, gains, problem: AllocationProblem, lap: LaplacianBundle | None = None) -> ClosedLoop:
    lap = laplacian(s.graph) if lap is None else lap
    return ClosedLoop(
        [a.plant for a in s.agents],
        [a.disturbance for a in s.agents],
        gains,
        problem,
        s.graph,
        lap,
    )


def integrate(s: Scenario, gains, inst: RunInstance, backend: str | None = None) -> TrajectoryRecord:
    """Fixed-step RK4 over ``[0, t_end]`` with piecewise-constant switching.

    Switching events act from the first grid point at or after their time.
    """
    cl = build_closed_loop(s, gains, inst.problem)
    X = cl.pack(inst.x0, GeneratorState(inst.z0, inst.lam0, inst.v0), inst.xi0)
    dt, n_steps, dec = s.dt, s.n_steps, s.decimate
    k_dist = np.array([_first_step(t, dt) for t in s.disturbance_times()])
    k_rej = _first_step(s.rejection_time(), dt)
    cuts = sorted({int(k) for k in list(k_dist) + [k_rej] if 0 < k < n_steps})
    bounds = [0] + cuts + [n_steps]

    n_rows = n_steps // dec + 1
    states = np.empty((n_rows, cl.dim))
    states[0] = X
    row = 1
    zrows, sel = cl.gradient_wiring()
    kinds = inst.problem.kinds()
    params = inst.problem.packed_params()
    for ka, kb in zip(bounds[:-1], bounds[1:]):
        M, c = cl.affine(ka >= k_dist, ka >= k_rej)
        X, written, bad = rk4_affine(M, c, zrows, sel, kinds, params, X, dt, ka, kb, dec, states[row:], backend)
        row += written
        if bad >= 0:
            raise NonFiniteState(bad * dt)

    steps = np.arange(n_rows) * dec
    times = steps * dt
    y = states @ cl.output_map().T
    u = np.empty_like(y)
    eta_err = np.zeros_like(y)
    for ka, kb in zip(bounds[:-1], bounds[1:]):
        rows = (steps >= ka) & ((steps < kb) | (kb == n_steps))
        if not rows.any():
            continue
        u[rows] = states[rows] @ cl.control_map(ka >= k_rej).T
        for i, H in enumerate(cl.eta_error_maps(ka >= k_dist)):
            if H.shape[0]:
                eta_err[rows, i] = np.linalg.norm(states[rows] @ H.T, axis=1)
    return TrajectoryRecord(
        times=times,
        y=y,
        z=states[:, cl.z],
        lam=states[:, cl.lam],
        v=states[:, cl.v],
        u=u,
        eta_err=eta_err,
        states=states,
        axis=inst.axis,
    )


def integrate_generator(
    problem: AllocationProblem,
    lap: LaplacianBundle,
    state0: GeneratorState,
    t_end: float,
    dt: float = 1e-3,
    decimate: int = 10,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Generator-only RK4 run; returns ``(times, states)`` with rows ``[z | lam | v]``."""
    n = problem.n
    L = lap.L
    I = np.eye(n)
    Z = np.zeros((n, n))
    M = np.block([[Z, I, Z], [-I, -L, -L], [Z, L, Z]])
    c = np.concatenate([np.zeros(n), problem.d, np.zeros(n)])
    zrows = np.arange(n)
    sel = np.hstack([I, Z, Z])
    n_steps = int(round(t_end / dt))
    n_rows = n_steps // decimate + 1
    out = np.empty((n_rows, 3 * n))
    out[0] = state0.pack()
    _, _, bad = rk4_affine(
        M, c, zrows, sel, problem.kinds(), problem.packed_params(), state0.pack(), dt, 0, n_steps, decimate, out[1:], backend
    )
    if bad >= 0:
        raise NonFiniteState(bad * dt)
    return np.arange(n_rows) * decimate * dt, out


# -- evaluation ------------------------------------------------------------------------


def fit_decay_rate(t, err, window=(1e-6, 1e-2)):
    """Least-squares slope of ``ln err`` over samples with ``err`` inside ``window``.

    Returns ``(slope, r_squared, n_points)``; slope and R^2 are NaN when
    fewer than three samples fall in the window.
    """
    t = np.asarray(t, dtype=float)
    err = np.asarray(err, dtype=float)
    mask = (err >= window[0]) & (err <= window[1])
    if mask.sum() < 3:
        return float("nan"), float("nan"), int(mask.sum())
    tt, ll = t[mask], np.log(err[mask])
    A = np.column_stack([tt, np.ones_like(tt)])
    coef, *_ = np.linalg.lstsq(A, ll, rcond=None)
    resid = ll - A @ coef
    ss_tot = float(np.sum((ll - ll.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2, int(mask.sum())


@dataclass
class Metrics:
    tracking_error: float
    optimality_gap: float
    constraint_residual: float
    grad_spread: float
    final_max_deviation: float
    decay_rate: float
    decay_r2: float
    y_final: list
    y_star: list
    theta: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}


def evaluate(rec: TrajectoryRecord, p: AllocationProblem, y_star=None, theta=None, window_frac: float = 0.05) -> Metrics:
    if rec.times.size == 0:
        raise ValueError("empty trajectory")
    if y_star is None:
        y_star, theta = solve_allocation_oracle(p)
    y_star = np.asarray(y_star, dtype=float)
    T = rec.times.size
    k = max(1, int(math.ceil(window_frac * T)))
    yw, zw = rec.y[-k:], rec.z[-k:]
    tracking = float(np.mean(np.max(np.abs(yw - zw), axis=1)))
    gap_series = np.linalg.norm(rec.y - y_star, axis=1)
    gap = float(np.mean(gap_series[-k:]))
    resid = float(np.mean(np.abs(yw.sum(axis=1) - p.total_resource)))
    spread = float(np.mean([kkt_check(row, p).grad_spread for row in yw]))
    rate, r2, _ = fit_decay_rate(rec.times, gap_series)
    return Metrics(
        tracking_error=tracking,
        optimality_gap=gap,
        constraint_residual=resid,
        grad_spread=spread,
        final_max_deviation=float(np.max(np.abs(rec.y[-1] - y_star))),
        decay_rate=rate,
        decay_r2=r2,
        y_final=rec.y[-1].tolist(),
        y_star=y_star.tolist(),
        theta=float(theta) if theta is not None else float("nan"),
    )


@dataclass
class RunResult:
    instance: RunInstance
    record: TrajectoryRecord
    metrics: Metrics


def run_scenario(s: Scenario, gains=None, seed: int | None = None, backend: str | None = None) -> list[RunResult]:
    """Synthesize (unless ``gains`` are given), integrate every axis and evaluate."""
    gains = synthesize_scenario(s) if gains is None else gains
    results = []
    for inst in instantiate(s, seed):
        rec = integrate(s, gains, inst, backend)
        y_star, theta = solve_allocation_oracle(inst.problem)
        results.append(RunResult(inst, rec, evaluate(rec, inst.problem, y_star, theta)))
    return results


def write_outputs(results: list[RunResult], out_dir, extra: dict | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    multi = len(results) > 1
    for res in results:
        name = f"trajectory_axis{res.record.axis}.csv" if multi else "trajectory.csv"
        res.record.to_csv(out_dir / name)
        paths.append(out_dir / name)
    doc = {"runs": [dict(axis=r.record.axis, **r.metrics.to_dict()) for r in results]}
    if extra:
        doc.update(extra)
    (out_dir / "metrics.json").write_text(json.dumps(doc, indent=2))
    paths.append(out_dir / "metrics.json")
    return paths
