"""Offline gain computation for the tracking and disturbance-rejection loops."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    AssignmentFailure,
    NotMinimumPhase,
    SingularMatrix,
    Uncontrollable,
    Unobservable,
    Unsolvable,
    ZeroHighFrequencyGain,
)
from .numerics import eigenvalues, max_norm, numerical_rank, solve_linear
from .plant import (
    AgentPlant,
    check_observable,
    controllability_matrix,
    markov_rows,
    normal_form,
    relative_degree,
)


def default_k1_poles(n: int) -> list[float]:
    return [-2.0 - 0.5 * k for k in range(n)]


def default_observer_poles(n: int) -> list[float]:
    return [-5.0 * (1.0 + 0.2 * k) for k in range(n)]


def hurwitz_coefficients(r: int, root: float = 2.0) -> np.ndarray:
    """``c_0..c_(r-1)`` of ``(s + root)^r``, lowest order first."""
    poly = np.poly(np.full(r, -root))  # highest order first, leading 1
    return poly[::-1][:r].copy()


def companion(c) -> np.ndarray:
    """Companion matrix of ``s^r + c_(r-1) s^(r-1) + ... + c_0``."""
    c = np.asarray(c, dtype=float)
    r = c.size
    M = np.zeros((r, r))
    M[:-1, 1:] = np.eye(r - 1)
    M[-1, :] = -c
    return M


# --- regulator equations -------------------------------------------------------------


@dataclass(frozen=True)
class RegulatorSolution:
    X1: np.ndarray
    U1: np.ndarray
    X2: np.ndarray
    U2: float

    def residuals(self, p: AgentPlant, S) -> dict:
        S = np.asarray(S, dtype=float)
        r1 = self.X1 @ S - p.A @ self.X1 - p.B @ self.U1 - p.E
        r2 = p.C @ self.X1
        r3 = p.A @ self.X2 + p.B * self.U2
        r4 = p.C @ self.X2 - 1.0
        return {
            "sylvester": max_norm(r1),
            "output_zero": max_norm(r2),
            "static": max_norm(r3),
            "unit_output": max_norm(r4),
        }

    def max_residual(self, p: AgentPlant, S) -> float:
        return max(self.residuals(p, S).values())


def solve_regulator_equations(p: AgentPlant, S) -> RegulatorSolution:
    """Solve both regulator-equation blocks by Kronecker lifting.

    Block 1: ``X1 S = A X1 + B U1 + E`` and ``C X1 = 0``.
    Block 2: ``0 = A X2 + B U2`` and ``C X2 = 1``.
    """
    S = np.asarray(S, dtype=float).reshape(p.q, p.q)
    n, q = p.n, p.q
    In = np.eye(n)
    Iq = np.eye(q)
    if q:
        # column-major vec: vec(X S) = (S^T kron I) vec X
        top = np.hstack([np.kron(S.T, In) - np.kron(Iq, p.A), -np.kron(Iq, p.B)])
        bottom = np.hstack([np.kron(Iq, p.C), np.zeros((q, q))])
        lhs = np.vstack([top, bottom])
        rhs = np.concatenate([p.E.reshape(-1, order="F"), np.zeros(q)])
        try:
            sol = solve_linear(lhs, rhs)
        except SingularMatrix as exc:
            raise Unsolvable(f"disturbance block of the regulator equations: {exc}") from exc
        X1 = sol[: n * q].reshape(n, q, order="F")
        U1 = sol[n * q :].reshape(1, q)
    else:
        X1 = np.zeros((n, 0))
        U1 = np.zeros((1, 0))
    lhs2 = np.block([[-p.A, -p.B], [p.C, np.zeros((1, 1))]])
    rhs2 = np.concatenate([np.zeros(n), [1.0]])
    try:
        sol2 = solve_linear(lhs2, rhs2)
    except SingularMatrix as exc:
        raise Unsolvable(f"static block of the regulator equations: {exc}") from exc
    return RegulatorSolution(X1, U1, sol2[:n].reshape(n, 1), float(sol2[n]))


# --- pole placement ------------------------------------------------------------------


def _poly_from_poles(poles) -> np.ndarray:
    poles = np.asarray(poles, dtype=complex)
    coeffs = np.poly(poles)
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs))):
        raise ValueError("poles must form a self-conjugate set")
    return coeffs.real


def _check_poles(poles, n):
    poles = np.asarray(poles, dtype=complex).ravel()
    if poles.size != n:
        raise ValueError(f"need {n} poles, got {poles.size}")
    if np.any(poles.real >= 0):
        raise ValueError("requested poles must lie in the open left half-plane")
    return poles


def stabilizing_gain(A, B, poles) -> np.ndarray:
    """Single-input Ackermann placement; returns ``K`` with ``eig(A + B K) = poles``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, 1)
    poles = _check_poles(poles, n)
    ctrb = controllability_matrix(A, B)
    if numerical_rank(ctrb) < n:
        raise Uncontrollable("(A, B) is not controllable")
    coeffs = _poly_from_poles(poles)  # highest order first
    pA = np.zeros_like(A)
    for c in coeffs:
        pA = pA @ A + c * np.eye(n)
    en = np.zeros((1, n))
    en[0, -1] = 1.0
    try:
        row = solve_linear(ctrb.T, en.T).T  # e_n^T ctrb^-1
    except SingularMatrix as exc:
        raise Uncontrollable(str(exc)) from exc
    K = -(row @ pA)
    return K.reshape(1, n)


def _block_diag_from_poles(poles) -> np.ndarray:
    """Real matrix with the given (self-conjugate) spectrum."""
    poles = list(np.asarray(poles, dtype=complex))
    blocks = []
    while poles:
        p = poles.pop(0)
        if abs(p.imag) < 1e-12:
            blocks.append(np.array([[p.real]]))
        else:
            k = int(np.argmin([abs(x - np.conj(p)) for x in poles]))
            poles.pop(k)
            blocks.append(np.array([[p.real, p.imag], [-p.imag, p.real]]))
    return sla.block_diag(*blocks)


def observer_gain(Cobs, S, poles, seed: int = 0, retries: int = 10) -> np.ndarray:
    """Gain ``L`` (q x m) with ``S - L Cobs`` Hurwitz.

    ``Cobs`` is first compressed onto its row space.  A one-dimensional row
    space is handled by dual Ackermann; otherwise a Sylvester-equation
    assignment with random coupling is retried until the eigenvalue check
    passes.
    """
    S = np.asarray(S, dtype=float)
    q = S.shape[0]
    if q == 0:
        return np.zeros((0, np.shape(Cobs)[0]))
    Cobs = np.asarray(Cobs, dtype=float).reshape(-1, q)
    poles = _check_poles(poles, q)
    if not check_observable(Cobs, S):
        raise Unobservable("(Cobs, S) is not observable")
    # Cobs = Q Rk with orthonormal Q (m x k)
    U, sv, Vh = np.linalg.svd(Cobs, full_matrices=False)
    k = int(np.sum(sv > 1e-12 * max(sv[0], 1e-300)))
    Q = U[:, :k]
    Rk = sv[:k, None] * Vh[:k]
    if k == 1:
        K = stabilizing_gain(S.T, Rk.T, poles)  # S^T + Rk^T K placed
        L = -K.T @ Q.T
        return L
    F = _block_diag_from_poles(poles)
    if np.min(np.abs(eigenvalues(S).eigenvalues[:, None] - poles[None, :])) < 1e-6:
        raise AssignmentFailure("requested observer poles overlap the exosystem spectrum")
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        G = rng.standard_normal((k, q))
        X = sla.solve_sylvester(S.T, -F, Rk.T @ G)
        if abs(np.linalg.det(X)) < 1e-10 * max(max_norm(X), 1.0) ** q:
            continue
        K = G @ np.linalg.inv(X)
        L = K.T @ Q.T
        if eigenvalues(S - L @ Cobs).abscissa < 0:
            return L
    raise AssignmentFailure(f"no stabilizing observer gain after {retries} draws")


def composite_gains(reg: RegulatorSolution, K1) -> tuple[np.ndarray, float]:
    K1 = np.asarray(K1, dtype=float).reshape(1, -1)
    K2 = reg.U1 - K1 @ reg.X1
    K3 = float(reg.U2 - (K1 @ reg.X2)[0, 0])
    return K2, K3


@dataclass(frozen=True)
class FeedbackGains:
    K1: np.ndarray
    K2: np.ndarray
    K3: float
    Lbar: np.ndarray
    Lhat: np.ndarray | None = None


@dataclass(frozen=True)
class HighGainSet:
    r: int
    Xbar1: np.ndarray
    Ubar1: np.ndarray
    Xbar2: np.ndarray
    Ubar2: float
    Kbar1: np.ndarray
    Kbar2: np.ndarray
    Kbar3: float
    Xhat: np.ndarray
    eps: float
    c: np.ndarray
    hf_gain: float
    cancel_row: np.ndarray = field(repr=False)

    def state_gain(self) -> np.ndarray:
        """Row multiplying ``x`` in the real-time-gradient law."""
        return -self.cancel_row / self.hf_gain + self.Kbar1 @ self.Xhat


def high_gain_synthesis(p: AgentPlant, S, c=None, eps: float = 0.1) -> HighGainSet:
    S = np.asarray(S, dtype=float).reshape(p.q, p.q)
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    nf = normal_form(p)
    if not nf.minimum_phase:
        raise NotMinimumPhase(
            f"zero dynamics abscissa {eigenvalues(nf.A0).abscissa:.4g} >= 0"
        )
    r = relative_degree(p)
    c = hurwitz_coefficients(r) if c is None else np.asarray(c, dtype=float).ravel()
    if c.size != r:
        raise ValueError(f"need {r} polynomial coefficients c_0..c_(r-1), got {c.size}")
    if eigenvalues(companion(c)).abscissa >= 0:
        raise ValueError(f"s^{r} + sum c_k s^k is not Hurwitz for c = {c.tolist()}")
    rows = markov_rows(p, r + 1)  # C A^0 .. C A^r
    b = float(rows[r - 1] @ p.B[:, 0])
    if abs(b) <= 1e-12 * max(max_norm(p.B) * max_norm(rows[r - 1]), 1e-300):
        raise ZeroHighFrequencyGain("C A^(r-1) B vanishes")
    q = p.q
    Xbar1 = np.zeros((r, q))
    for k in range(1, r):
        Xbar1[k] = Xbar1[k - 1] @ S - rows[k - 1] @ p.E
    Ubar1 = ((Xbar1[r - 1] @ S - rows[r - 1] @ p.E) / b).reshape(1, q)
    Xbar2 = np.zeros((r, 1))
    Xbar2[0, 0] = 1.0
    Ubar2 = 0.0
    Kbar1 = (-(1.0 / (b * eps**r)) * c * eps ** np.arange(r)).reshape(1, r)
    Kbar2 = Ubar1 - Kbar1 @ Xbar1
    Kbar3 = float(Ubar2 - (Kbar1 @ Xbar2)[0, 0])
    return HighGainSet(
        r=r,
        Xbar1=Xbar1,
        Ubar1=Ubar1,
        Xbar2=Xbar2,
        Ubar2=Ubar2,
        Kbar1=Kbar1,
        Kbar2=Kbar2,
        Kbar3=Kbar3,
        Xhat=rows[:r].copy(),
        eps=float(eps),
        c=c,
        hf_gain=b,
        cancel_row=rows[r].reshape(1, -1).copy(),
    )


# --- per-agent synthesis record ------------------------------------------------------

LAWS = ("state_feedback", "output_feedback", "realtime_gradient")


@dataclass(frozen=True)
class AgentGains:
    """Everything one agent's controller needs at run time.

    ``Kx``, ``K2`` and ``K3`` are the effective gains of ``u = Kx s + K2 eta +
    K3 z`` where ``s`` is the plant state or its Luenberger estimate.
    """

    law: str
    regulator: RegulatorSolution
    Kx: np.ndarray
    K2: np.ndarray
    K3: float
    Lbar: np.ndarray
    Lhat: np.ndarray | None
    feedback: FeedbackGains | None
    high_gain: HighGainSet | None

    def closed_loop_matrices(self, p: AgentPlant, S) -> dict:
        S = np.asarray(S, dtype=float).reshape(p.q, p.q)
        mats = {"A+BK": p.A + p.B @ self.Kx}
        if p.q:
            mats["S-LbarE"] = S - self.Lbar @ p.E
        if self.Lhat is not None:
            mats["A+LhatC"] = p.A + self.Lhat @ p.C
        if self.high_gain is not None:
            mats["companion"] = companion(self.high_gain.c)
        return mats

    def abscissas(self, p: AgentPlant, S) -> dict:
        return {k: eigenvalues(m).abscissa for k, m in self.closed_loop_matrices(p, S).items()}


def synthesize_agent(
    p: AgentPlant,
    S,
    law: str = "state_feedback",
    k1_poles=None,
    lbar_poles=None,
    lhat_poles=None,
    eps: float = 0.1,
    c=None,
    seed: int = 0,
) -> AgentGains:
    if law not in LAWS:
        raise ValueError(f"unknown control law {law!r}")
    S = np.asarray(S, dtype=float).reshape(p.q, p.q)
    reg = solve_regulator_equations(p, S)
    Lbar = observer_gain(p.E, S, lbar_poles or default_observer_poles(p.q), seed=seed)
    if law == "realtime_gradient":
        hg = high_gain_synthesis(p, S, c, eps)
        return AgentGains(law, reg, hg.state_gain(), hg.Kbar2, hg.Kbar3, Lbar, None, None, hg)
    K1 = stabilizing_gain(p.A, p.B, k1_poles or default_k1_poles(p.n))
    K2, K3 = composite_gains(reg, K1)
    Lhat = None
    if law == "output_feedback":
        Lhat = -observer_gain(p.C, p.A, lhat_poles or default_observer_poles(p.n), seed=seed)
    fb = FeedbackGains(K1, K2, K3, Lbar, Lhat)
    return AgentGains(law, reg, K1, K2, K3, Lbar, Lhat, fb, None)
