"""Assembly of the networked closed loop.

The reference right-hand side below is written agent by agent from the
operations in :mod:`optreg.plant`, :mod:`optreg.control` and
:mod:`optreg.generator`.  Since it is affine in the stacked state apart from
the gradient terms, the simulator probes it once per switching configuration
to obtain ``(M, c)`` and hands those to the RK4 kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..control import (
    output_feedback_rhs,
    realtime_gradient_control,
    reduced_observer_rhs,
    state_feedback_control,
)
from ..costs import AllocationProblem
from ..generator import GeneratorState, generator_rhs
from ..graph import LaplacianBundle, SharingGraph
from ..plant import AgentPlant, DisturbanceModel, plant_rhs
from ..synthesis import AgentGains


@dataclass(frozen=True)
class AgentBlock:
    """Column ranges of one agent's local states in the stacked vector."""

    x: slice
    w: slice
    eta_bar: slice
    xi: slice


class ClosedLoop:
    """Stacked closed loop ``[agent_1 | ... | agent_N | z | lam | v]``.

    Each agent block holds its plant state ``x``, exosystem state ``w``,
    observer state ``eta_bar`` and (output feedback only) the estimate ``xi``.
    """

    def __init__(
        self,
        plants: list[AgentPlant],
        disturbances: list[DisturbanceModel],
        gains: list[AgentGains],
        problem: AllocationProblem,
        graph: SharingGraph,
        lap: LaplacianBundle,
    ):
        self.plants = list(plants)
        self.disturbances = list(disturbances)
        self.gains = list(gains)
        self.problem = problem
        self.graph = graph
        self.lap = lap
        self.N = len(self.plants)
        self.law = self.gains[0].law
        if any(g.law != self.law for g in self.gains):
            raise ValueError("all agents must run the same control law")
        blocks = []
        k = 0
        for p in self.plants:
            nxi = p.n if self.law == "output_feedback" else 0
            x = slice(k, k + p.n)
            w = slice(x.stop, x.stop + p.q)
            eb = slice(w.stop, w.stop + p.q)
            xi = slice(eb.stop, eb.stop + nxi)
            blocks.append(AgentBlock(x, w, eb, xi))
            k = xi.stop
        self.blocks = blocks
        self.z = slice(k, k + self.N)
        self.lam = slice(self.z.stop, self.z.stop + self.N)
        self.v = slice(self.lam.stop, self.lam.stop + self.N)
        self.dim = self.v.stop
        self._cache: dict = {}

    # -- state packing ------------------------------------------------------------------

    def pack(self, x0s, gen: GeneratorState, xi0s=None, eta_bar0s=None) -> np.ndarray:
        X = np.zeros(self.dim)
        for i, (b, dist) in enumerate(zip(self.blocks, self.disturbances)):
            X[b.x] = x0s[i]
            X[b.w] = dist.w0
            if eta_bar0s is not None:
                X[b.eta_bar] = eta_bar0s[i]
            if xi0s is not None and b.xi.stop > b.xi.start:
                X[b.xi] = xi0s[i]
        X[self.z] = gen.z
        X[self.lam] = gen.lam
        X[self.v] = gen.v
        return X

    def column_owner(self) -> list[tuple[int | None, str]]:
        """``(agent, role)`` for every column of the stacked state."""
        owner: list = [None] * self.dim
        for i, b in enumerate(self.blocks):
            for role, sl in (("x", b.x), ("w", b.w), ("eta_bar", b.eta_bar), ("xi", b.xi)):
                for j in range(sl.start, sl.stop):
                    owner[j] = (i, role)
        for role, sl in (("z", self.z), ("lam", self.lam), ("v", self.v)):
            for i, j in enumerate(range(sl.start, sl.stop)):
                owner[j] = (i, role)
        return owner

    # -- reference dynamics -------------------------------------------------------------

    def _estimate_state(self, i, X):
        b = self.blocks[i]
        return X[b.xi] if self.law == "output_feedback" else X[b.x]

    def eta(self, i, X) -> np.ndarray:
        return X[self.blocks[i].eta_bar] + self.gains[i].Lbar @ self._estimate_state(i, X)

    def control(self, i, X, rejection_on: bool) -> float:
        g = self.gains[i]
        z_i = X[self.z][i]
        eta = self.eta(i, X)
        if self.law == "realtime_gradient":
            u, _ = realtime_gradient_control(g.high_gain, self.plants[i], X[self.blocks[i].x], eta, z_i, enabled=rejection_on)
            return u
        return state_feedback_control(g.feedback, self._estimate_state(i, X), eta, z_i, enabled=rejection_on)

    def gradient_points(self, X) -> np.ndarray:
        """Where each agent evaluates its gradient: ``z_i`` or, for the
        real-time law, the measured output ``y_i``."""
        if self.law == "realtime_gradient":
            return np.array([float(p.C[0] @ X[b.x]) for p, b in zip(self.plants, self.blocks)])
        return X[self.z].copy()

    def reference_rhs(self, X, dist_on, rejection_on, with_gradient: bool = True) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        dist_on = np.broadcast_to(dist_on, (self.N,))
        rejection_on = np.broadcast_to(rejection_on, (self.N,))
        dX = np.zeros(self.dim)
        for i, (p, dist, g, b) in enumerate(zip(self.plants, self.disturbances, self.gains, self.blocks)):
            u = self.control(i, X, bool(rejection_on[i]))
            w = X[b.w]
            w_eff = w if dist_on[i] else np.zeros_like(w)
            dX[b.x] = plant_rhs(p, X[b.x], u, w_eff)
            dX[b.w] = dist.S @ w if dist_on[i] else 0.0
            dX[b.eta_bar], _ = reduced_observer_rhs(g.Lbar, p, dist.S, self._estimate_state(i, X), u, X[b.eta_bar])
            if self.law == "output_feedback":
                dX[b.xi] = output_feedback_rhs(p, g.Lhat, X[b.xi], u, float(p.C[0] @ X[b.x]))
        gen = GeneratorState(X[self.z], X[self.lam], X[self.v])
        if with_gradient:
            drive = self.problem.grad(self.gradient_points(X))
        else:
            drive = np.zeros(self.N)
        dgen = generator_rhs(gen, self.problem, self.lap, drive=drive)
        dX[self.z] = dgen.z
        dX[self.lam] = dgen.lam
        dX[self.v] = dgen.v
        return dX

    # -- affine assembly ----------------------------------------------------------------

    def affine(self, dist_on, rejection_on) -> tuple[np.ndarray, np.ndarray]:
        """``(M, c)`` with ``reference_rhs(X, ..., with_gradient=False) = M X + c``."""
        key = (tuple(bool(v) for v in np.broadcast_to(dist_on, (self.N,))),
               tuple(bool(v) for v in np.broadcast_to(rejection_on, (self.N,))))
        if key not in self._cache:
            c = self.reference_rhs(np.zeros(self.dim), key[0], key[1], with_gradient=False)
            M = np.empty((self.dim, self.dim))
            for j in range(self.dim):
                e = np.zeros(self.dim)
                e[j] = 1.0
                M[:, j] = self.reference_rhs(e, key[0], key[1], with_gradient=False) - c
            self._cache[key] = (M, c)
        return self._cache[key]

    def gradient_wiring(self) -> tuple[np.ndarray, np.ndarray]:
        """``(zrows, sel)``: rows receiving ``-grad f_i`` and the linear map to its argument."""
        zrows = np.arange(self.z.start, self.z.stop)
        sel = np.zeros((self.N, self.dim))
        for i, (p, b) in enumerate(zip(self.plants, self.blocks)):
            if self.law == "realtime_gradient":
                sel[i, b.x] = p.C[0]
            else:
                sel[i, self.z.start + i] = 1.0
        return zrows, sel

    def kernel_rhs(self, X, dist_on, rejection_on) -> np.ndarray:
        M, c = self.affine(dist_on, rejection_on)
        zrows, sel = self.gradient_wiring()
        out = M @ X + c
        out[zrows] -= self.problem.grad(sel @ X)
        return out

    # -- output maps --------------------------------------------------------------------

    def output_map(self) -> np.ndarray:
        Y = np.zeros((self.N, self.dim))
        for i, (p, b) in enumerate(zip(self.plants, self.blocks)):
            Y[i, b.x] = p.C[0]
        return Y

    def control_map(self, rejection_on) -> np.ndarray:
        """Rows ``U`` with ``u = U X`` (control laws are linear in the state)."""
        rejection_on = np.broadcast_to(rejection_on, (self.N,))
        U = np.zeros((self.N, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            for i in range(self.N):
                U[i, j] = self.control(i, e, bool(rejection_on[i]))
        return U

    def eta_error_maps(self, dist_on) -> list[np.ndarray]:
        """Per agent, the linear map ``X -> eta_i - w_i`` (w counted only once switched on)."""
        dist_on = np.broadcast_to(dist_on, (self.N,))
        maps = []
        for i, (g, b) in enumerate(zip(self.gains, self.blocks)):
            q = b.w.stop - b.w.start
            H = np.zeros((q, self.dim))
            H[:, b.eta_bar] = np.eye(q)
            src = b.xi if self.law == "output_feedback" else b.x
            H[:, src] += g.Lbar
            if dist_on[i]:
                H[:, b.w] -= np.eye(q)
            maps.append(H)
        return maps
