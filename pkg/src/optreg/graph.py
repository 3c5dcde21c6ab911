"""Undirected weighted information-sharing graphs and their Laplacians."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .numerics import numerical_rank


@dataclass(frozen=True)
class SharingGraph:
    n: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, got {w.shape}")
        if np.any(w < 0) or not np.allclose(w, w.T, rtol=0, atol=0):
            raise ValueError("adjacency must be symmetric and nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("adjacency must have zero diagonal")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n: int, edges) -> "SharingGraph":
        """Build from ``[[i, j, w], ...]`` with 1-based node ids (weight defaults to 1)."""
        w = np.zeros((n, n))
        for edge in edges:
            i, j = int(edge[0]) - 1, int(edge[1]) - 1
            weight = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"invalid edge {edge!r} for n={n}")
            w[i, j] = w[j, i] = weight
        return cls(n, w)

    def neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.n) if self.weights[i, j] > 0]


def fig1_graph() -> SharingGraph:
    """Four agents, unit weights, edges 1-2, 2-3, 2-4, 3-4."""
    return SharingGraph.from_edges(4, [(1, 2), (2, 3), (2, 4), (3, 4)])


@dataclass(frozen=True)
class LaplacianBundle:
    L: np.ndarray
    r: np.ndarray
    R: np.ndarray


def laplacian_matrix(g: SharingGraph) -> np.ndarray:
    return np.diag(g.weights.sum(axis=1)) - g.weights


def _complement_basis(r: np.ndarray) -> np.ndarray:
    # Gram-Schmidt on e_k - r (r.e_k), two passes for re-orthogonalization.
    n = r.size
    cols: list[np.ndarray] = []
    basis = [r]
    for k in range(n):
        if len(cols) == n - 1:
            break
        v = np.zeros(n)
        v[k] = 1.0
        for _ in range(2):
            for b in basis:
                v = v - b * (b @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            cols.append(v)
            basis.append(v)
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def laplacian(g: SharingGraph) -> LaplacianBundle:
    L = laplacian_matrix(g)
    r = np.ones(g.n) / np.sqrt(g.n)
    return LaplacianBundle(L, r, _complement_basis(r))


def is_connected(g: SharingGraph) -> bool:
    """Breadth-first reachability over positive-weight edges."""
    if g.n <= 1:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(g.weights[i] > 0):
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return len(seen) == g.n


def connected_by_rank(g: SharingGraph) -> bool:
    return numerical_rank(laplacian_matrix(g)) == g.n - 1 if g.n > 1 else True
