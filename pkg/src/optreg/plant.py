"""Single-input single-output agent plants, disturbance exosystems and the
structural tests the controllers rely on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTransform, NoRelativeDegree
from .numerics import as_matrix, eigenvalues, max_norm, null_space, numerical_rank


@dataclass(frozen=True)
class AgentPlant:
    """``x' = A x + B u + E w``, ``y = C x`` with scalar ``u`` and ``y``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = as_matrix(np.reshape(self.B, (n, -1)), rows=n, cols=1)
        C = as_matrix(np.reshape(self.C, (-1, n)), rows=1, cols=n)
        E = np.array(self.E, dtype=float)
        if E.size == 0:
            E = np.zeros((n, 0))
        E = E.reshape(n, -1)
        if not np.all(np.isfinite(E)):
            raise ValueError("E has non-finite entries")
        for name, m in zip("ABCE", (A, B, C, E)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.E.shape[1]


@dataclass(frozen=True)
class DisturbanceModel:
    """Exosystem ``w' = S w`` started from ``w0`` once it is switched on."""

    S: np.ndarray
    w0: np.ndarray
    enabled_from: float = 0.0

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.size == 0:
            S = np.zeros((0, 0))
        elif S.ndim < 2:
            S = S.reshape(1, -1)
        if S.shape[0] != S.shape[1]:
            raise ValueError(f"S must be square, got {S.shape}")
        w0 = np.array(self.w0, dtype=float).reshape(-1)
        if w0.size != S.shape[0]:
            raise ValueError(f"w0 has length {w0.size}, S is {S.shape}")
        S.setflags(write=False)
        w0.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "w0", w0)

    @property
    def q(self) -> int:
        return self.S.shape[0]

    @classmethod
    def none(cls) -> "DisturbanceModel":
        return cls(np.zeros((0, 0)), np.zeros(0))


def plant_rhs(p: AgentPlant, x, u, w) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float).reshape(-1)
    return p.A @ x + p.B[:, 0] * float(u) + p.E @ w


def markov_rows(p: AgentPlant, k: int) -> np.ndarray:
    """Rows ``C A^j`` for ``j = 0..k-1`` stacked as a ``k x n`` matrix."""
    rows = [p.C[0]]
    for _ in range(k - 1):
        rows.append(rows[-1] @ p.A)
    return np.array(rows).reshape(k, p.n)


def relative_degree(p: AgentPlant) -> int:
    scale_a = max(max_norm(p.A), 1.0)
    scale_bc = max_norm(p.B) * max_norm(p.C)
    row = p.C[0].copy()
    for k in range(1, p.n + 1):
        if abs(row @ p.B[:, 0]) > 1e-10 * scale_bc * scale_a ** (k - 1):
            return k
        row = row @ p.A
    raise NoRelativeDegree("C A^(k-1) B vanishes for every k <= n")


def controllability_matrix(A, B) -> np.ndarray:
    A = np.asarray(A)
    B = np.asarray(B)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(C, A) -> np.ndarray:
    C = np.asarray(C)
    A = np.asarray(A)
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def check_minimal(p: AgentPlant) -> bool:
    n = p.n
    return (
        numerical_rank(controllability_matrix(p.A, p.B)) == n
        and numerical_rank(observability_matrix(p.C, p.A)) == n
    )


def check_observable(E, S) -> bool:
    """Observability of ``(E, S)`` with ``E`` acting as the measurement of ``w``.

    Stacks ``[E; E S; ...; E S^(q-1)]`` and asks for rank ``q``.
    """
    S = np.asarray(S, dtype=float)
    q = S.shape[0]
    if q == 0:
        return True
    E = np.asarray(E, dtype=float).reshape(-1, q)
    return numerical_rank(observability_matrix(E, S)) == q


def regulator_rank_check(p: AgentPlant, S) -> bool:
    """``rank [A - lam I, B; C, 0] = n + 1`` for every ``lam`` in ``sigma(S) U {0}``."""
    S = np.asarray(S, dtype=float)
    n = p.n
    lams = list(eigenvalues(S).eigenvalues) if S.size else []
    lams.append(0.0)
    for lam in lams:
        top = np.hstack([p.A - lam * np.eye(n), p.B])
        bottom = np.hstack([p.C, np.zeros((1, 1))])
        M = np.vstack([top, bottom]).astype(complex)
        if numerical_rank(M) != n + 1:
            return False
    return True


@dataclass(frozen=True)
class NormalForm:
    r: int
    chain_map: np.ndarray
    zero_map: np.ndarray
    A0: np.ndarray
    Bz: np.ndarray
    Ez: np.ndarray
    T_inv: np.ndarray

    @property
    def minimum_phase(self) -> bool:
        return self.A0.shape[0] == 0 or eigenvalues(self.A0).abscissa < 0

    def to_normal(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return self.chain_map @ x, self.zero_map @ x

    def from_normal(self, chi, chi_z) -> np.ndarray:
        return self.T_inv @ np.concatenate([np.atleast_1d(chi), np.atleast_1d(chi_z)])


def normal_form(p: AgentPlant) -> NormalForm:
    """Split the state into the output chain ``C A^(k-1) x`` and zero dynamics.

    The zero-dynamics coordinates ``W x`` are orthonormal rows with
    ``W B = 0`` that complete the chain to an invertible transformation.
    """
    r = relative_degree(p)
    n = p.n
    chain = markov_rows(p, r)
    # Orthonormal rows annihilating B, then drop the span of the first r-1
    # chain rows (which also annihilate B).
    N = null_space(p.B.T).T  # (n-1) x n
    if r > 1:
        coords = chain[: r - 1] @ N.T
        keep = null_space(coords).T
        W = keep @ N
    else:
        W = N
    W = W.reshape(n - r, n)
    T = np.vstack([chain, W])
    if numerical_rank(T, 1e-9 * max(max_norm(T), 1.0)) != n:
        raise DegenerateTransform("[chain_map; W] is not invertible")
    T_inv = np.linalg.inv(T)
    V_chi, V = T_inv[:, :r], T_inv[:, r:]
    A0 = W @ p.A @ V
    Bz = W @ p.A @ V_chi
    Ez = W @ p.E
    return NormalForm(r, chain, W, A0, Bz, Ez, T_inv)


def is_minimum_phase(p: AgentPlant) -> bool:
    return normal_form(p).minimum_phase
