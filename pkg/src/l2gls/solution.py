"""Tours and route sets.

Both solution types share one cyclic "giant tour" representation.  For CVRP
every route starts with its own copy of the depot: copy 0 is node 0 itself and
further copies get ids ``n, n+1, ...`` that all map back to physical node 0.
Routes are the runs of customers between consecutive depot copies, so one
cycle over customers and depot copies encodes the whole route set.  A spare
empty route is always kept so that relocation can open a new route.

Operators work on these "extended" ids; everything user-facing (``order``,
``routes``, ``edges``) is reported in physical node ids.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NodeLookupError, ValidationError
from .instance import Kind, RoutingInstance
from .rng import as_rng


class ViolationKind(str, enum.Enum):
    KIND_MISMATCH = "KIND_MISMATCH"
    INVALID_NODE = "INVALID_NODE"
    DUPLICATE_NODE = "DUPLICATE_NODE"
    MISSING_NODE = "MISSING_NODE"
    DEPOT_IN_ROUTE = "DEPOT_IN_ROUTE"
    CAPACITY_EXCEEDED = "CAPACITY_EXCEEDED"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    node: int | None = None
    route: int | None = None
    detail: str = ""

    def __str__(self):
        where = []
        if self.route is not None:
            where.append(f"route {self.route}")
        if self.node is not None:
            where.append(f"node {self.node}")
        return f"{self.kind.value}({', '.join(where)}){': ' + self.detail if self.detail else ''}"


class Solution:
    """Common giant-tour machinery; use :class:`Tour` or :class:`RouteSet`."""

    kind: Kind

    def __init__(self, inst: RoutingInstance, seq, n_ext: int):
        self.inst = inst
        self.n_ext = int(n_ext)
        self.phys = np.zeros(self.n_ext, dtype=np.int64)
        self.phys[: inst.n] = np.arange(inst.n)
        self.seq = np.asarray(seq, dtype=np.int64).copy()
        self.generation = 0
        self._refresh()
        self.cost = self.recompute_cost()

    # -- derived arrays ----------------------------------------------------

    def _refresh(self):
        E = len(self.seq)
        pos = np.zeros(self.n_ext, dtype=np.int64)
        pos[self.seq] = np.arange(E)
        self.pos = pos
        self.pred = self.seq[pos - 1]
        self.succ = self.seq[(pos + 1) % E]

    def _touch(self, delta: float):
        self._refresh()
        self.cost += delta
        self.generation += 1

    def edges(self) -> np.ndarray:
        """Traversed edges as physical ``(i, j)`` rows, self-loops omitted."""
        a = self.phys[self.seq]
        b = np.roll(a, -1)
        keep = a != b
        return np.stack([a[keep], b[keep]], axis=1)

    def recompute_cost(self) -> float:
        e = self.edges()
        return float(self.inst.dist[e[:, 0], e[:, 1]].sum())

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        for name in ("seq", "pos", "pred", "succ", "phys"):
            setattr(new, name, getattr(self, name).copy())
        new._copy_extra(self)
        return new

    def _copy_extra(self, other):
        pass

    def to_dict(self, cost: float | None = None) -> dict:
        raise NotImplementedError


class Tour(Solution):
    kind = Kind.TSP

    def __init__(self, inst: RoutingInstance, order):
        order = [int(v) for v in order]
        bad = [v for v in order if not 0 <= v < inst.n]
        if bad:
            raise ValidationError("invalid tour", [Violation(ViolationKind.INVALID_NODE, node=v) for v in bad])
        super().__init__(inst, order, inst.n)

    @property
    def order(self) -> list[int]:
        return self.seq.tolist()

    def to_dict(self, cost=None) -> dict:
        return {"cost": self.cost if cost is None else cost, "tour": self.order}


class RouteSet(Solution):
    kind = Kind.CVRP

    def __init__(self, inst: RoutingInstance, routes):
        routes = [list(map(int, r)) for r in routes if len(r)]
        n = inst.n
        bad = [
            Violation(ViolationKind.DEPOT_IN_ROUTE if v == 0 else ViolationKind.INVALID_NODE, node=v, route=k)
            for k, r in enumerate(routes)
            for v in r
            if not 0 < v < n
        ]
        if bad:
            raise ValidationError("invalid route set", bad)
        seq = []
        for r_idx, route in enumerate(routes + [[]]):
            seq.append(0 if r_idx == 0 else n + r_idx - 1)
            seq.extend(route)
        self.demand_ext = None
        super().__init__(inst, seq, n + len(routes))

    def _refresh(self):
        super()._refresh()
        inst = self.inst
        if self.demand_ext is None or len(self.demand_ext) != self.n_ext:
            self.demand_ext = np.zeros(self.n_ext, dtype=np.int64)
            self.demand_ext[: inst.n] = inst.demands
            self.is_depot = self.phys == 0
        starts = self.is_depot[self.seq]
        rid_at = np.cumsum(starts) - 1
        self.rid = rid_at[self.pos]
        self.n_routes = int(starts.sum())
        self.load = np.bincount(rid_at, weights=self.demand_ext[self.seq], minlength=self.n_routes).astype(np.int64)

    def _copy_extra(self, other):
        for name in ("rid", "load", "demand_ext", "is_depot"):
            setattr(self, name, getattr(other, name).copy())

    def _touch(self, delta: float):
        super()._touch(delta)
        empty = int((self.load == 0).sum())
        if empty != 1:
            self._rebuild_depots()

    def _rebuild_depots(self):
        """Keep exactly one empty route and renumber depot copies densely."""
        routes = self.routes
        generation, cost = self.generation, self.cost
        RouteSet.__init__(self, self.inst, routes)
        self.generation, self.cost = generation, cost

    @property
    def routes(self) -> list[list[int]]:
        out, cur = [], None
        for v in self.seq.tolist():
            if self.phys[v] == 0:
                if cur:
                    out.append(cur)
                cur = []
            else:
                cur.append(int(self.phys[v]))
        if cur:
            out.append(cur)
        return out

    @property
    def route_load(self) -> list[int]:
        d = self.inst.demands
        return [int(d[r].sum()) for r in self.routes]

    @property
    def node_route(self) -> dict[int, tuple[int, int]]:
        return {c: (r, p) for r, route in enumerate(self.routes) for p, c in enumerate(route)}

    def to_dict(self, cost=None) -> dict:
        return {"cost": self.cost if cost is None else cost, "routes": self.routes}


def make_solution(inst: RoutingInstance, data) -> Solution:
    """Tour from a flat sequence, RouteSet from a list of routes."""
    if inst.kind is Kind.TSP:
        return Tour(inst, data)
    return RouteSet(inst, data)


# -- objective ------------------------------------------------------------------


def _order_of(tour) -> list[int]:
    return tour.order if isinstance(tour, Tour) else [int(v) for v in tour]


def _routes_of(rs) -> list[list[int]]:
    return rs.routes if isinstance(rs, RouteSet) else [[int(v) for v in r] for r in rs]


def tsp_cost(inst: RoutingInstance, tour) -> float:
    order = _order_of(tour)
    bad = _tour_violations(inst, order)
    if bad:
        raise ValidationError("invalid tour", bad)
    o = np.asarray(order)
    return float(inst.dist[o, np.roll(o, -1)].sum())


def cvrp_cost(inst: RoutingInstance, rs) -> float:
    routes = _routes_of(rs)
    bad = _route_violations(inst, routes)
    if bad:
        raise ValidationError("infeasible route set", bad)
    d = inst.dist
    total = 0.0
    for r in routes:
        if r:
            path = np.asarray([0] + r + [0])
            total += float(d[path[:-1], path[1:]].sum())
    return total


def solution_cost(inst: RoutingInstance, sol) -> float:
    if inst.kind is Kind.TSP:
        return tsp_cost(inst, sol)
    return cvrp_cost(inst, sol)


def reported_cost(inst: RoutingInstance, sol: Solution) -> float:
    """True cost in raw (denormalized) units."""
    raw = inst.denormalized()
    return solution_cost(raw, sol.order if isinstance(sol, Tour) else sol.routes)


# -- feasibility --------------------------------------------------------------


def _tour_violations(inst, order) -> list[Violation]:
    out = []
    n = inst.n
    seen = set()
    for v in order:
        if not 0 <= v < n:
            out.append(Violation(ViolationKind.INVALID_NODE, node=v))
        elif v in seen:
            out.append(Violation(ViolationKind.DUPLICATE_NODE, node=v))
        seen.add(v)
    for v in range(n):
        if v not in seen:
            out.append(Violation(ViolationKind.MISSING_NODE, node=v))
    return out


def _route_violations(inst, routes) -> list[Violation]:
    out = []
    n = inst.n
    seen = set()
    for r_idx, route in enumerate(routes):
        load = 0
        for v in route:
            if v == 0:
                out.append(Violation(ViolationKind.DEPOT_IN_ROUTE, node=0, route=r_idx))
                continue
            if not 0 < v < n:
                out.append(Violation(ViolationKind.INVALID_NODE, node=v, route=r_idx))
                continue
            if v in seen:
                out.append(Violation(ViolationKind.DUPLICATE_NODE, node=v, route=r_idx))
            seen.add(v)
            load += int(inst.demands[v])
        if load > inst.capacity:
            out.append(
                Violation(ViolationKind.CAPACITY_EXCEEDED, route=r_idx, detail=f"load {load} > {inst.capacity}")
            )
    for v in range(1, n):
        if v not in seen:
            out.append(Violation(ViolationKind.MISSING_NODE, node=v))
    return out


def validate(inst: RoutingInstance, sol) -> list[Violation]:
    if isinstance(sol, Tour) or (not isinstance(sol, RouteSet) and inst.kind is Kind.TSP):
        if inst.kind is not Kind.TSP:
            return [Violation(ViolationKind.KIND_MISMATCH, detail="tour given for a CVRP instance")]
        return _tour_violations(inst, _order_of(sol))
    if inst.kind is not Kind.CVRP:
        return [Violation(ViolationKind.KIND_MISMATCH, detail="route set given for a TSP instance")]
    return _route_violations(inst, _routes_of(sol))


# -- construction ---------------------------------------------------------------


def initial_solution(inst: RoutingInstance, seed) -> Solution:
    """Random tour, or a random customer order split greedily by capacity."""
    rng = as_rng(seed)
    if inst.kind is Kind.TSP:
        return Tour(inst, rng.permutation(inst.n))
    routes, cur, load = [], [], 0
    for c in (rng.permutation(inst.n - 1) + 1).tolist():
        g = int(inst.demands[c])
        if cur and load + g > inst.capacity:
            routes.append(cur)
            cur, load = [], 0
        cur.append(c)
        load += g
    routes.append(cur)
    return RouteSet(inst, routes)


def free_capacity(rs: RouteSet, i: int) -> int:
    if not 0 < i < rs.inst.n:
        raise NodeLookupError(f"node {i} is not a customer")
    pos = np.flatnonzero(rs.seq == i)
    if len(pos) == 0:
        raise NodeLookupError(f"customer {i} not in any route")
    return int(rs.inst.capacity - rs.load[rs.rid[i]])
