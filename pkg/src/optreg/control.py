"""Run-time controller right-hand sides for a single agent.

Every function here reads only the agent's own plant data, gains and local
signals; the generator coupling through the graph lives in
:mod:`optreg.generator`.
"""

from __future__ import annotations

import numpy as np

from .plant import AgentPlant
from .synthesis import FeedbackGains, HighGainSet


def _scalar(a) -> float:
    return float(np.asarray(a).reshape(-1)[0])


def reduced_observer_rhs(Lbar, p: AgentPlant, S, x_or_xi, u, eta_bar):
    """Reduced-order disturbance observer.

    Returns ``(eta_bar', eta)`` with ``eta = eta_bar + Lbar x``.  Passing the
    Luenberger estimate ``xi`` instead of ``x`` gives the output-feedback
    variant.
    """
    S = np.asarray(S, dtype=float)
    x = np.asarray(x_or_xi, dtype=float)
    eta_bar = np.asarray(eta_bar, dtype=float)
    LE = Lbar @ p.E
    d_eta_bar = (
        (S - LE) @ eta_bar
        + (S @ Lbar - LE @ Lbar - Lbar @ p.A) @ x
        - Lbar @ p.B[:, 0] * float(u)
    )
    return d_eta_bar, eta_bar + Lbar @ x


def state_feedback_control(gains: FeedbackGains, x, eta, z, enabled: bool = True) -> float:
    """``u = K1 x + K2 eta + K3 z``; ``enabled`` gates the disturbance term."""
    u = _scalar(gains.K1 @ np.asarray(x, dtype=float)) + gains.K3 * float(z)
    if enabled and gains.K2.size:
        u += _scalar(gains.K2 @ np.asarray(eta, dtype=float))
    return u


def output_feedback_rhs(p: AgentPlant, Lhat, xi, u, y_meas) -> np.ndarray:
    """Luenberger estimate ``xi' = A xi + B u + Lhat (C xi - y)``."""
    xi = np.asarray(xi, dtype=float)
    innov = float(p.C[0] @ xi) - float(y_meas)
    return p.A @ xi + p.B[:, 0] * float(u) + Lhat[:, 0] * innov


def realtime_gradient_control(hg: HighGainSet, p: AgentPlant, x, eta, z, cost=None, enabled: bool = True):
    """High-gain law driven by real-time gradients.

    ``u = -(C A^r / C A^(r-1) B) x + Kbar1 Xhat x + Kbar2 eta + Kbar3 z``.

    ``eta`` is the reconstructed estimate ``eta_bar + Lbar x``.  Returns
    ``(u, drive)`` where ``drive`` is the gradient the generator must use in
    place of ``grad f(z)``, i.e. ``grad f(y)`` at the measured output (None if
    no cost is given).
    """
    x = np.asarray(x, dtype=float)
    u = _scalar(-(hg.cancel_row @ x) / hg.hf_gain + hg.Kbar1 @ (hg.Xhat @ x)) + hg.Kbar3 * float(z)
    if enabled and hg.Kbar2.size:
        u += _scalar(hg.Kbar2 @ np.asarray(eta, dtype=float))
    y = float(p.C[0] @ x)
    drive = None if cost is None else float(cost.grad(y))
    return u, drive
