"""Dense linear-algebra kernel: solves, spectra and numerical rank.

Matrices are plain 2-D ``numpy.ndarray`` objects.  The factorizations are the
LAPACK ones exposed through scipy (partial-pivot LU, column-pivoted QR,
Hessenberg reduction followed by shifted QR for eigenvalues); this module adds
the unit-free tolerance policy and the error contract on top of them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, SingularMatrix

PIVOT_RTOL = 1e-12


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce nested lists / scalars into a finite 2-D float array."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1) if rows is None or rows == 1 else m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def max_norm(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    abscissa: float

    @property
    def is_hurwitz(self) -> bool:
        return self.abscissa < 0.0


def solve_linear(A, B) -> np.ndarray:
    """Solve ``A X = B`` by partial-pivot LU.

    Raises
    ------
    SingularMatrix
        If a pivot falls below ``1e-12 * max|A|``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    vector_rhs = B.ndim == 1
    if vector_rhs:
        B = B.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"row mismatch: A {A.shape}, B {B.shape}")
    if A.shape[0] == 0:
        return np.zeros((0, B.shape[1]), dtype=np.result_type(A, B))
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("non-finite entries in linear system")
    scale = max_norm(A)
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {np.min(pivots):.3e} below {PIVOT_RTOL:.0e} * max|A| = {PIVOT_RTOL * scale:.3e}"
        )
    X = sla.lu_solve((lu, piv), B, check_finite=False)
    return X.ravel() if vector_rhs else X


def eigenvalues(A) -> Spectrum:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if A.shape[0] == 0:
        return Spectrum(np.zeros(0, dtype=complex), -np.inf)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    ev = np.asarray(ev, dtype=complex)
    return Spectrum(ev, float(np.max(ev.real)))


def spectral_abscissa(A) -> float:
    return eigenvalues(A).abscissa


def numerical_rank(A, tol: float | None = None) -> int:
    """Rank from the diagonal of a column-pivoted QR factorization.

    The default tolerance is ``1e-9 * max|A| * max(m, n)``.
    """
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError("numerical_rank expects a matrix")
    if A.size == 0:
        return 0
    if tol is None:
        tol = 1e-9 * max_norm(A) * max(A.shape)
    R = sla.qr(A, mode="r", pivoting=True, check_finite=False)[0]
    diag = np.abs(np.diag(R))
    return int(np.sum(diag > tol))


def null_space(A, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis (as columns) of the right null space of ``A``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n)
    r = numerical_rank(A, tol)
    _, _, vh = np.linalg.svd(A)
    return vh[r:].conj().T


def is_hurwitz(A, margin: float = 0.0) -> bool:
    return spectral_abscissa(A) < -margin
