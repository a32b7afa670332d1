"""Guided local search penalties.

Features are undirected edges; a feature's cost is the edge length.  At a
local minimum every in-solution edge with maximal utility
``cost / (1 + penalty)`` has its penalty incremented, and the search then
works on ``L + lam * sum(penalty of traversed edges)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solution import Solution

DEFAULT_LAMBDA = 0.3


@dataclass(frozen=True)
class Feature:
    edge: tuple[int, int]
    cost: float

    @classmethod
    def of(cls, inst, i: int, j: int) -> "Feature":
        a, b = (i, j) if i <= j else (j, i)
        return cls((int(a), int(b)), float(inst.dist[a, b]))


def _key(i: int, j: int) -> tuple[int, int]:
    return (int(i), int(j)) if i <= j else (int(j), int(i))


class PenaltyState:
    """Sparse edge penalties with a dense mirror for vectorized lookups."""

    def __init__(self, n: int, lam: float = DEFAULT_LAMBDA):
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        self.n = int(n)
        self.lam = float(lam)
        self.penalties: dict[tuple[int, int], int] = {}
        self.matrix = np.zeros((self.n, self.n), dtype=np.int64)
        self.version = 0

    @property
    def num_features_penalized(self) -> int:
        return len(self.penalties)

    def get(self, i: int, j: int) -> int:
        return self.penalties.get(_key(i, j), 0)

    def increment(self, i: int, j: int, by: int = 1):
        k = _key(i, j)
        p = self.penalties.get(k, 0) + by
        if p <= 0:
            self.penalties.pop(k, None)
            p = 0
        else:
            self.penalties[k] = p
        self.matrix[k[0], k[1]] = self.matrix[k[1], k[0]] = p
        self.version += 1

    def snapshot(self) -> list[tuple[int, int, int]]:
        return [(i, j, p) for (i, j), p in sorted(self.penalties.items())]

    def copy(self) -> "PenaltyState":
        new = PenaltyState(self.n, self.lam)
        new.penalties = dict(self.penalties)
        new.matrix = self.matrix.copy()
        new.version = self.version
        return new


def indicator(sol: Solution, edge) -> int:
    i, j = edge.edge if isinstance(edge, Feature) else edge
    e = sol.edges()
    hit = ((e[:, 0] == i) & (e[:, 1] == j)) | ((e[:, 0] == j) & (e[:, 1] == i))
    return int(hit.any())


def penalty_sum(sol: Solution, ps: PenaltyState) -> int:
    """Sum of penalties over traversed edges (a doubly traversed edge counts twice)."""
    e = sol.edges()
    return int(ps.matrix[e[:, 0], e[:, 1]].sum())


def augmented_cost(sol: Solution, ps: PenaltyState, cost: float | None = None) -> float:
    L = sol.recompute_cost() if cost is None else cost
    return L + ps.lam * penalty_sum(sol, ps)


def feature_utility(local_min: Solution, ps: PenaltyState, f: Feature) -> float:
    return indicator(local_min, f) * f.cost / (1 + ps.get(*f.edge))


def utilities(local_min: Solution, ps: PenaltyState) -> tuple[np.ndarray, np.ndarray]:
    """Distinct in-solution edges (sorted pairs) and their utilities."""
    e = np.sort(local_min.edges(), axis=1)
    e = np.unique(e, axis=0)
    d = local_min.inst.dist[e[:, 0], e[:, 1]]
    return e, d / (1 + ps.matrix[e[:, 0], e[:, 1]])


def penalize(local_min: Solution, ps: PenaltyState) -> list[Feature]:
    """Increment every maximal-utility in-solution edge; ties are all penalized."""
    edges, util = utilities(local_min, ps)
    if len(edges) == 0:
        return []
    best = util.max()
    out = []
    for i, j in edges[util == best].tolist():
        out.append(Feature.of(local_min.inst, i, j))
        ps.increment(i, j)
    return out
