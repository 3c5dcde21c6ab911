"""Distributed optimal signal generator and an independent KKT oracle.

The generator is the primal-dual flow

    z'   = -grad f(z) + lam
    lam' = -L lam - L v + d - z
    v'   = L lam

whose equilibria are exactly the optimizers of the resource allocation
problem.  ``solve_allocation_oracle`` reaches the same point by a different
route (bisection on the common multiplier) and is used to check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import AllocationProblem, LocalCost
from .errors import BracketFailure
from .graph import LaplacianBundle

THETA_BRACKET = 1e6


@dataclass
class GeneratorState:
    z: np.ndarray
    lam: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (self.z.shape == self.lam.shape == self.v.shape):
            raise ValueError("z, lam and v must have equal length")

    @classmethod
    def default(cls, problem: AllocationProblem) -> "GeneratorState":
        """Feasible start: ``z = d``, ``lam = 0``, ``v = 0``."""
        return cls(problem.d.copy(), np.zeros(problem.n), np.zeros(problem.n))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.z, self.lam, self.v])

    @classmethod
    def unpack(cls, flat) -> "GeneratorState":
        z, lam, v = np.split(np.asarray(flat, dtype=float), 3)
        return cls(z, lam, v)


def generator_rhs(s: GeneratorState, p: AllocationProblem, lap: LaplacianBundle, drive=None) -> GeneratorState:
    """Time derivative of the generator.

    ``drive`` replaces ``grad f(z)`` in the z-equation when given; the
    real-time-gradient controller feeds ``grad f(y)`` through it.
    """
    L = lap.L
    if L.shape != (p.n, p.n) or s.z.shape != (p.n,):
        raise ValueError("generator dimensions disagree with problem / graph")
    lam0 = L @ s.lam
    v0 = L @ s.v
    g = p.grad(s.z) if drive is None else np.asarray(drive, dtype=float)
    return GeneratorState(-g + s.lam, -lam0 - v0 + p.d - s.z, lam0)


def _solve_scalar(c: LocalCost, theta: float, tol: float = 1e-13) -> float:
    """Root of ``grad f(y) = theta`` by safeguarded Newton with a bisection fallback."""
    g = lambda y: float(c.grad(y)) - theta  # noqa: E731
    lo, hi = -1.0, 1.0
    while g(lo) > 0:
        lo *= 2.0
        if lo < -1e15:
            raise BracketFailure(f"no root of grad f = {theta} below {lo}")
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e15:
            raise BracketFailure(f"no root of grad f = {theta} above {hi}")
    y = 0.5 * (lo + hi)
    h = 1e-5
    for _ in range(200):
        gy = g(y)
        if gy == 0.0:
            return y
        if gy > 0:
            hi = y
        else:
            lo = y
        curv = (float(c.grad(y + h)) - float(c.grad(y - h))) / (2 * h)
        step = y - gy / curv if curv > 0 else None
        y_new = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if abs(y_new - y) <= tol * max(1.0, abs(y)) or hi - lo <= tol * max(1.0, abs(y)):
            return y_new
        y = y_new
    return y


def solve_allocation_oracle(p: AllocationProblem, tol: float = 1e-10):
    """Return ``(y_star, theta)`` for the allocation problem.

    For each trial multiplier every agent solves ``grad f_i(y_i) = theta``;
    the outer loop bisects on the monotone feasibility gap
    ``sum y_i(theta) - sum d_i``.
    """
    total = p.total_resource

    def alloc(theta):
        return np.array([_solve_scalar(c, theta) for c in p.costs])

    lo, hi = -THETA_BRACKET, THETA_BRACKET
    g_lo = alloc(lo).sum() - total
    g_hi = alloc(hi).sum() - total
    if not (g_lo <= 0 <= g_hi):
        raise BracketFailure(f"feasibility gap does not change sign on [{lo:g}, {hi:g}]")
    theta = 0.5 * (lo + hi)
    y = alloc(theta)
    for _ in range(300):
        theta = 0.5 * (lo + hi)
        y = alloc(theta)
        gap = y.sum() - total
        if abs(gap) <= tol:
            break
        if gap > 0:
            hi = theta
        else:
            lo = theta
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(theta)):
            break
    return y, float(theta)


@dataclass(frozen=True)
class KktCertificate:
    theta: float
    grad_spread: float
    constraint_residual: float

    def satisfied(self, tol: float) -> bool:
        return self.grad_spread <= tol and self.constraint_residual <= tol


def kkt_check(z, p: AllocationProblem, tol: float = 1e-8) -> KktCertificate:
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = np.asarray(z, dtype=float)
    g = p.grad(z)
    theta = float(np.mean(g))
    return KktCertificate(
        theta=theta,
        grad_spread=float(np.max(np.abs(g - theta))),
        constraint_residual=float(abs(z.sum() - p.total_resource)),
    )


def equilibrium_state(p: AllocationProblem, lap: LaplacianBundle, y_star, theta) -> GeneratorState:
    """An equilibrium of the generator built from the oracle output.

    ``v`` is the minimum-norm solution of ``L v = d - y*``; any shift along
    the all-ones direction is also an equilibrium.
    """
    v = np.linalg.lstsq(lap.L, p.d - np.asarray(y_star), rcond=None)[0]
    return GeneratorState(np.asarray(y_star, dtype=float), np.full(p.n, float(theta)), v)
