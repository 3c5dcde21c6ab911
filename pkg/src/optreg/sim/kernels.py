"""Fixed-step RK4 for the assembled closed loop.

The closed loop is affine in the stacked state except for the local
gradients, so one step needs only

    X' = M X + c,   X'[zrows[i]] -= grad f_i(sel[i] . X)

Two interchangeable implementations exist: a numba kernel with explicit
loops and a vectorized numpy path.  ``OPTREG_BACKEND=numpy`` selects the
latter (see :mod:`optreg._accel`).
"""

from __future__ import annotations

import math

import numpy as np

from .. import costs as _costs
from .._accel import USE_NUMBA, njit

# --- numba path ----------------------------------------------------------------------


@njit
def _grad_scalar(kind, p0, p1, p2, y):
    if kind == 0:
        return 2.0 * p0 * y + p1
    if kind == 1:
        y2 = y * y
        return 2.0 * y * math.log1p(y2) + 2.0 * y * y2 / (1.0 + y2) + 2.0 * (y + p0)
    if kind == 2:
        a = (p1 - p0) * y
        if a >= 0:
            sig = 1.0 / (1.0 + math.exp(-a))
        else:
            e = math.exp(a)
            sig = e / (1.0 + e)
        return p0 + (p1 - p0) * sig + 2.0 * y
    y2 = y * y
    return (y * y2 + 2.0 * y) / (p0 * (1.0 + y2) ** 1.5) + 2.0 * (y - p1)


@njit
def grad_batch_numba(kinds, params, y):
    out = np.empty(y.size)
    for i in range(y.size):
        out[i] = _grad_scalar(kinds[i], params[i, 0], params[i, 1], params[i, 2], y[i])
    return out


@njit
def _rhs_numba(M, c, zrows, sel, kinds, params, x, out):
    n = x.size
    for r in range(n):
        acc = c[r]
        for j in range(n):
            acc += M[r, j] * x[j]
        out[r] = acc
    for i in range(zrows.size):
        arg = 0.0
        for j in range(n):
            arg += sel[i, j] * x[j]
        out[zrows[i]] -= _grad_scalar(kinds[i], params[i, 0], params[i, 1], params[i, 2], arg)


@njit
def rk4_numba(M, c, zrows, sel, kinds, params, x0, dt, k_start, k_stop, decim, out):
    """Advance from step ``k_start`` to ``k_stop``.

    States at steps divisible by ``decim`` are written to consecutive rows
    of ``out``.  Returns ``(x_final, rows_written, bad_step)``, ``bad_step``
    being -1 unless a non-finite state appeared.
    """
    n = x0.size
    x = x0.copy()
    s1 = np.empty(n)
    s2 = np.empty(n)
    s3 = np.empty(n)
    s4 = np.empty(n)
    tmp = np.empty(n)
    rows = 0
    for k in range(k_start, k_stop):
        _rhs_numba(M, c, zrows, sel, kinds, params, x, s1)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * s1[j]
        _rhs_numba(M, c, zrows, sel, kinds, params, tmp, s2)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * s2[j]
        _rhs_numba(M, c, zrows, sel, kinds, params, tmp, s3)
        for j in range(n):
            tmp[j] = x[j] + dt * s3[j]
        _rhs_numba(M, c, zrows, sel, kinds, params, tmp, s4)
        finite = True
        for j in range(n):
            x[j] += dt / 6.0 * (s1[j] + 2.0 * s2[j] + 2.0 * s3[j] + s4[j])
            if not math.isfinite(x[j]):
                finite = False
        if not finite:
            return x, rows, k + 1
        if (k + 1) % decim == 0:
            out[rows, :] = x
            rows += 1
    return x, rows, -1


# --- numpy path ----------------------------------------------------------------------


def grad_batch_numpy(kinds, params, y):
    out = np.empty(y.size)
    for code, name in enumerate(_costs.KINDS):
        idx = np.flatnonzero(kinds == code)
        if idx.size:
            prm = tuple(params[idx, k] for k in range(len(_costs.PARAM_NAMES[name])))
            out[idx] = _costs._grad(name, prm, y[idx])
    return out


def _make_numpy_rhs(M, c, zrows, sel, kinds, params):
    groups = []
    for code, name in enumerate(_costs.KINDS):
        idx = np.flatnonzero(kinds == code)
        if idx.size:
            prm = tuple(params[idx, k] for k in range(len(_costs.PARAM_NAMES[name])))
            groups.append((name, idx, prm, zrows[idx], sel[idx]))

    def rhs(x):
        out = M @ x + c
        for name, _, prm, rows, s in groups:
            out[rows] -= _costs._grad(name, prm, s @ x)
        return out

    return rhs


def rk4_numpy(M, c, zrows, sel, kinds, params, x0, dt, k_start, k_stop, decim, out):
    rhs = _make_numpy_rhs(M, c, zrows, sel, kinds, params)
    x = x0.copy()
    rows = 0
    half = 0.5 * dt
    sixth = dt / 6.0
    # divergence is reported through the returned step index, not warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(k_start, k_stop):
            s1 = rhs(x)
            s2 = rhs(x + half * s1)
            s3 = rhs(x + half * s2)
            s4 = rhs(x + dt * s3)
            x = x + sixth * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
            if not np.all(np.isfinite(x)):
                return x, rows, k + 1
            if (k + 1) % decim == 0:
                out[rows] = x
                rows += 1
    return x, rows, -1


def rk4_affine(M, c, zrows, sel, kinds, params, x0, dt, k_start, k_stop, decim, out, backend=None):
    """Dispatch to the numba or numpy kernel (``backend`` overrides the env flag)."""
    use_numba = USE_NUMBA if backend is None else backend == "numba"
    args = (
        np.ascontiguousarray(M, dtype=np.float64),
        np.ascontiguousarray(c, dtype=np.float64),
        np.ascontiguousarray(zrows, dtype=np.int64),
        np.ascontiguousarray(sel, dtype=np.float64).reshape(len(zrows), len(x0)),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(params, dtype=np.float64).reshape(len(zrows), 3),
        np.ascontiguousarray(x0, dtype=np.float64),
        float(dt),
        int(k_start),
        int(k_stop),
        int(decim),
        out,
    )
    if use_numba:
        return rk4_numba(*args)
    return rk4_numpy(*args)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
