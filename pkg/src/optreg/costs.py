"""Closed registry of local convex costs with analytic gradients.

Four kinds cover every example in the package:

* ``quadratic``  ``a*y**2 + b*y + c``
* ``quadlog``    ``y**2 * log(1 + y**2) + (y + delta)**2``
* ``logsumexp2`` ``log(exp(p*y) + exp(q*y)) + y**2``
* ``sqrtfrac``   ``y**2 / (s*sqrt(y**2 + 1)) + (y - c)**2``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import BoundViolation

KINDS = ("quadratic", "quadlog", "logsumexp2", "sqrtfrac")
KIND_CODE = {k: i for i, k in enumerate(KINDS)}
PARAM_NAMES = {
    "quadratic": ("a", "b", "c"),
    "quadlog": ("delta",),
    "logsumexp2": ("p", "q"),
    "sqrtfrac": ("s", "c"),
}
DEFAULT_INTERVAL = (-20.0, 20.0)


def _value(kind, prm, y):
    if kind == "quadratic":
        a, b, c = prm
        return a * y * y + b * y + c
    if kind == "quadlog":
        (delta,) = prm
        return y * y * np.log1p(y * y) + (y + delta) ** 2
    if kind == "logsumexp2":
        p, q = prm
        return np.logaddexp(p * y, q * y) + y * y
    s, c = prm
    return y * y / (s * np.sqrt(y * y + 1.0)) + (y - c) ** 2


def _grad(kind, prm, y):
    if kind == "quadratic":
        a, b, _ = prm
        return 2.0 * a * y + b
    if kind == "quadlog":
        (delta,) = prm
        y2 = y * y
        return 2.0 * y * np.log1p(y2) + 2.0 * y * y2 / (1.0 + y2) + 2.0 * (y + delta)
    if kind == "logsumexp2":
        p, q = prm
        return p + (q - p) * expit((q - p) * y) + 2.0 * y
    s, c = prm
    y2 = y * y
    return (y * y2 + 2.0 * y) / (s * (1.0 + y2) ** 1.5) + 2.0 * (y - c)


def _hess(kind, prm, y):
    if kind == "quadratic":
        return 2.0 * prm[0] * np.ones_like(np.asarray(y, dtype=float))
    if kind == "quadlog":
        y2 = y * y
        return (
            2.0 * np.log1p(y2)
            + 4.0 * y2 / (1.0 + y2)
            + (6.0 * y2 + 2.0 * y2 * y2) / (1.0 + y2) ** 2
            + 2.0
        )
    if kind == "logsumexp2":
        p, q = prm
        sig = expit((q - p) * y)
        return (q - p) ** 2 * sig * (1.0 - sig) + 2.0
    s, _ = prm
    y2 = y * y
    return (2.0 - y2) / (s * (1.0 + y2) ** 2.5) + 2.0


def _default_bounds(kind, prm, interval):
    if kind == "quadratic":
        return 2.0 * prm[0], 2.0 * prm[0]
    if kind == "quadlog":
        # Hessian is even and increasing in |y|; unbounded globally.
        edge = max(abs(interval[0]), abs(interval[1]))
        return 2.0, float(_hess(kind, prm, edge))
    if kind == "logsumexp2":
        p, q = prm
        return 2.0, 2.0 + (q - p) ** 2 / 4.0
    s, _ = prm
    # (2 - u)/(1 + u)^(5/2) ranges over [-2/5^(5/2), 2] for u = y^2 >= 0
    lo, hi = -2.0 / 5.0**2.5, 2.0
    if s < 0:
        lo, hi = hi, lo
    return 2.0 + lo / s, 2.0 + hi / s


@dataclass(frozen=True)
class LocalCost:
    """One agent's private cost ``f_i`` together with its resource datum ``d_i``."""

    kind: str
    params: tuple
    d: float = 0.0
    h_lo: float = field(default=None)
    h_hi: float = field(default=None)
    interval: tuple = DEFAULT_INTERVAL

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {KINDS}")
        prm = tuple(float(p) for p in self.params)
        if len(prm) != len(PARAM_NAMES[self.kind]):
            raise ValueError(f"{self.kind} takes parameters {PARAM_NAMES[self.kind]}")
        object.__setattr__(self, "params", prm)
        object.__setattr__(self, "interval", tuple(float(v) for v in self.interval))
        if self.kind == "quadratic" and prm[0] <= 0:
            raise ValueError("quadratic cost needs a > 0")
        if self.kind == "sqrtfrac" and prm[0] == 0:
            raise ValueError("sqrtfrac cost needs s != 0")
        lo, hi = _default_bounds(self.kind, prm, self.interval)
        if self.h_lo is None:
            object.__setattr__(self, "h_lo", float(lo))
        if self.h_hi is None:
            object.__setattr__(self, "h_hi", float(hi))
        if not (self.h_lo > 0 and self.h_hi >= self.h_lo):
            raise ValueError(f"need 0 < h_lo <= h_hi, got ({self.h_lo}, {self.h_hi})")
        if self.kind == "quadratic" and not (self.h_lo == self.h_hi == 2 * prm[0]):
            raise ValueError("quadratic cost must have h_lo = h_hi = 2a")

    @classmethod
    def quadratic(cls, a, b=0.0, c=0.0, d=0.0, **kw):
        return cls("quadratic", (a, b, c), d, **kw)

    @classmethod
    def quadlog(cls, delta, d=0.0, **kw):
        return cls("quadlog", (delta,), d, **kw)

    @classmethod
    def logsumexp2(cls, p, q, d=0.0, **kw):
        return cls("logsumexp2", (p, q), d, **kw)

    @classmethod
    def sqrtfrac(cls, s, c, d=0.0, **kw):
        return cls("sqrtfrac", (s, c), d, **kw)

    def value(self, y):
        return _value(self.kind, self.params, np.asarray(y, dtype=float))

    def grad(self, y):
        return _grad(self.kind, self.params, np.asarray(y, dtype=float))

    def hess(self, y):
        return _hess(self.kind, self.params, np.asarray(y, dtype=float))

    @property
    def code(self) -> int:
        return KIND_CODE[self.kind]

    def packed_params(self) -> np.ndarray:
        out = np.zeros(3)
        out[: len(self.params)] = self.params
        return out

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        out.update(dict(zip(PARAM_NAMES[self.kind], self.params)))
        out.update(d=self.d, h_lo=self.h_lo, h_hi=self.h_hi, interval=list(self.interval))
        return out


def grad(c: LocalCost, y):
    return c.grad(y)


def sampled_hessian(c: LocalCost, y, h: float = 1e-5):
    """Central difference of the analytic gradient."""
    y = np.asarray(y, dtype=float)
    return (c.grad(y + h) - c.grad(y - h)) / (2.0 * h)


def validate_bounds(c: LocalCost, interval=None, samples: int = 401, strict: bool = False) -> bool:
    """Check the declared curvature bounds on a uniform grid over ``interval``.

    Returns False on the first violation, or raises ``BoundViolation`` if
    ``strict`` is set.
    """
    lo, hi = c.interval if interval is None else interval
    if not lo < hi or samples < 2:
        raise ValueError("need lo < hi and at least two samples")
    ys = np.linspace(lo, hi, samples)
    hs = sampled_hessian(c, ys)
    ok = (hs >= c.h_lo * (1 - 1e-3)) & (hs <= c.h_hi * (1 + 1e-3))
    if np.all(ok):
        return True
    if strict:
        k = int(np.flatnonzero(~ok)[0])
        raise BoundViolation(float(ys[k]), float(hs[k]), (c.h_lo, c.h_hi))
    return False


@dataclass(frozen=True)
class AllocationProblem:
    """Minimize ``sum f_i(y_i)`` subject to ``sum y_i = sum d_i``."""

    costs: tuple

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        if len(self.costs) < 1:
            raise ValueError("allocation problem needs at least one agent")

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def d(self) -> np.ndarray:
        return np.array([c.d for c in self.costs])

    @property
    def total_resource(self) -> float:
        return float(np.sum(self.d))

    def grad(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.array([c.grad(yi) for c, yi in zip(self.costs, y)], dtype=float)

    def value(self, y) -> float:
        return float(sum(c.value(yi) for c, yi in zip(self.costs, y)))

    def kinds(self) -> np.ndarray:
        return np.array([c.code for c in self.costs], dtype=np.int64)

    def packed_params(self) -> np.ndarray:
        return np.array([c.packed_params() for c in self.costs]).reshape(self.n, 3)
