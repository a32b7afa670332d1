"""Local-search operators with vectorized delta evaluation.

Each ``*_best`` function scans a candidate-restricted neighbourhood of the
current solution and returns the move with the most negative change of the
augmented objective, or ``None`` when nothing improves it by more than
``IMPROVE_EPS``.  Node ids in move parameters are extended ids (see
:mod:`l2gls.solution`).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import InvalidArgumentError, StaleMoveError
from .gls import PenaltyState
from .instance import Kind, RoutingInstance
from .solution import RouteSet, Solution

IMPROVE_EPS = 1e-9


class Op(str, enum.Enum):
    TWO_OPT = "TWO_OPT"
    RELOCATE = "RELOCATE"
    SWAP = "SWAP"
    THREE_PERM = "THREE_PERM"


# non-identity orderings of a window (a, b, c)
THREE_PERMS = [p for p in permutations(range(3)) if p != (0, 1, 2)]


@dataclass(frozen=True)
class CandidateLists:
    neighbors: np.ndarray  # (n, k) sorted by ascending distance
    k: int

    def __getitem__(self, i) -> list[int]:
        return self.neighbors[i].tolist()


def default_k(n: int) -> int:
    return n - 1 if n <= 20 else min(10, n - 1)


def build_candidate_lists(inst: RoutingInstance, k: int) -> CandidateLists:
    n = inst.n
    if not 1 <= k < n:
        raise InvalidArgumentError(f"k must be in [1, {n - 1}], got {k}")
    d = inst.dist.copy()
    np.fill_diagonal(d, np.inf)
    # lexsort on (index, distance): ties broken by node id
    order = np.lexsort((np.broadcast_to(np.arange(n), (n, n)), d), axis=1)
    return CandidateLists(order[:, :k].copy(), k)


@dataclass(frozen=True)
class Move:
    op: Op
    params: tuple
    delta_true: float
    delta_aug: float
    generation: int


class EvalContext:
    """Instance, penalties and candidate lists shared by the operators.

    Caches extended-id distance matrices and candidate pair arrays; both only
    depend on the number of extended ids, which changes rarely.
    """

    def __init__(self, inst: RoutingInstance, penalties: PenaltyState | None = None, cand=None, k=None):
        self.inst = inst
        self.penalties = penalties if penalties is not None else PenaltyState(inst.n, 0.0)
        if cand is None:
            cand = build_candidate_lists(inst, k or default_k(inst.n))
        self.cand = cand
        self._dist: dict[int, np.ndarray] = {}
        self._aug: dict[int, tuple[int, np.ndarray]] = {}
        self._pairs: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    @staticmethod
    def _phys(inst, n_ext):
        phys = np.zeros(n_ext, dtype=np.int64)
        phys[: inst.n] = np.arange(inst.n)
        return phys

    def dist_ext(self, n_ext: int) -> np.ndarray:
        d = self._dist.get(n_ext)
        if d is None:
            phys = self._phys(self.inst, n_ext)
            d = self.inst.dist[np.ix_(phys, phys)]
            self._dist = {n_ext: d}
        return d

    def aug_ext(self, n_ext: int) -> np.ndarray:
        ps = self.penalties
        hit = self._aug.get(n_ext)
        if hit is not None and hit[0] == ps.version:
            return hit[1]
        d = self.dist_ext(n_ext)
        if ps.lam == 0 or not ps.penalties:
            a = d
        else:
            phys = self._phys(self.inst, n_ext)
            a = d + ps.lam * ps.matrix[np.ix_(phys, phys)]
        self._aug = {n_ext: (ps.version, a)}
        return a

    def pairs(self, n_ext: int, depth: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Ordered candidate pairs ``(u, v)`` over extended ids, closed under swap.

        The depot's physical id expands to every depot copy.
        """
        depth = self.cand.k if depth is None else min(depth, self.cand.k)
        key = (n_ext, depth)
        hit = self._pairs.get(key)
        if hit is not None:
            return hit
        n = self.inst.n
        nb = self.cand.neighbors[:, :depth]
        u = np.repeat(np.arange(n), depth)
        v = nb.reshape(-1)
        if self.inst.kind is Kind.CVRP:
            copies = np.concatenate([[0], np.arange(n, n_ext)])
            ext_u, ext_v = [u[(u != 0) & (v != 0)]], [v[(u != 0) & (v != 0)]]
            for c in copies:
                m = u == 0
                ext_u.append(np.full(m.sum(), c))
                ext_v.append(v[m])
                m = v == 0
                ext_u.append(u[m])
                ext_v.append(np.full(m.sum(), c))
            u, v = np.concatenate(ext_u), np.concatenate(ext_v)
        uu = np.concatenate([u, v])
        vv = np.concatenate([v, u])
        code = np.unique(uu * n_ext + vv)
        out = (code // n_ext, code % n_ext)
        self._pairs[key] = out
        return out


def _pick(deltas: np.ndarray):
    if len(deltas) == 0:
        return None
    k = int(np.argmin(deltas))
    if deltas[k] < -IMPROVE_EPS:
        return k
    return None


# -- 2-opt ----------------------------------------------------------------------


def _two_opt_ends(sol: Solution, u, v):
    """Both endpoint forms of a 2-opt move adding edge (u, v): (a, b) with new edges (a,b), (a+,b+)."""
    a = np.concatenate([u, sol.pred[u]])
    b = np.concatenate([v, sol.pred[v]])
    if isinstance(sol, RouteSet):
        flip = sol.pos[a] > sol.pos[b]
        a, b = np.where(flip, b, a), np.where(flip, a, b)
        ok = (sol.rid[a] == sol.rid[b]) & ~sol.is_depot[b] & (sol.pos[b] - sol.pos[a] >= 2)
    else:
        ok = (a != b) & (b != sol.succ[a]) & (a != sol.succ[b])
    return a[ok], b[ok]


def _two_opt_delta(W, sol, a, b):
    sa, sb = sol.succ[a], sol.succ[b]
    return W[a, b] + W[sa, sb] - W[a, sa] - W[b, sb]


def two_opt_best(sol: Solution, ctx: EvalContext, depth: int | None = None) -> Move | None:
    u, v = ctx.pairs(sol.n_ext, depth)
    a, b = _two_opt_ends(sol, u, v)
    A = ctx.aug_ext(sol.n_ext)
    k = _pick(_two_opt_delta(A, sol, a, b))
    if k is None:
        return None
    a, b = a[k : k + 1], b[k : k + 1]
    D = ctx.dist_ext(sol.n_ext)
    return Move(
        Op.TWO_OPT,
        (int(a[0]), int(b[0])),
        float(_two_opt_delta(D, sol, a, b)[0]),
        float(_two_opt_delta(A, sol, a, b)[0]),
        sol.generation,
    )


# -- relocate -------------------------------------------------------------------


def _relocate_cands(sol: Solution, u, v):
    """Mover ``i`` inserted right after anchor ``j`` (anchors: v and pred(v))."""
    i = np.concatenate([u, u])
    j = np.concatenate([v, sol.pred[v]])
    ok = (j != i) & (j != sol.pred[i])
    if isinstance(sol, RouteSet):
        ok &= ~sol.is_depot[i]
        ri, rj = sol.rid[i], sol.rid[j]
        ok &= (ri == rj) | (sol.load[rj] + sol.demand_ext[i] <= sol.inst.capacity)
    return i[ok], j[ok]


def _relocate_delta(W, sol, i, j):
    pi, si, sj = sol.pred[i], sol.succ[i], sol.succ[j]
    return (W[j, i] + W[i, sj] - W[j, sj]) - (W[pi, i] + W[i, si] - W[pi, si])


def relocate_best(sol: Solution, ctx: EvalContext, depth: int | None = None) -> Move | None:
    u, v = ctx.pairs(sol.n_ext, depth)
    i, j = _relocate_cands(sol, u, v)
    A = ctx.aug_ext(sol.n_ext)
    k = _pick(_relocate_delta(A, sol, i, j))
    if k is None:
        return None
    i, j = i[k : k + 1], j[k : k + 1]
    D = ctx.dist_ext(sol.n_ext)
    return Move(
        Op.RELOCATE,
        (int(i[0]), int(j[0])),
        float(_relocate_delta(D, sol, i, j)[0]),
        float(_relocate_delta(A, sol, i, j)[0]),
        sol.generation,
    )


# -- swap -----------------------------------------------------------------------


def _swap_cands(sol: Solution, u, v):
    ok = u < v
    if isinstance(sol, RouteSet):
        ok &= ~sol.is_depot[u] & ~sol.is_depot[v]
        ru, rv = sol.rid[u], sol.rid[v]
        du, dv = sol.demand_ext[u], sol.demand_ext[v]
        cap = sol.inst.capacity
        ok &= (ru == rv) | ((sol.load[ru] - du + dv <= cap) & (sol.load[rv] - dv + du <= cap))
    return u[ok], v[ok]


def _swap_delta(W, sol, i, j):
    pi, si, pj, sj = sol.pred[i], sol.succ[i], sol.pred[j], sol.succ[j]
    general = W[pi, j] + W[j, si] + W[pj, i] + W[i, sj] - W[pi, i] - W[i, si] - W[pj, j] - W[j, sj]
    # adjacent pairs share an edge that survives the exchange
    i_then_j = W[pi, j] + W[i, sj] - W[pi, i] - W[j, sj]
    j_then_i = W[pj, i] + W[j, si] - W[pj, j] - W[i, si]
    return np.where(si == j, i_then_j, np.where(sj == i, j_then_i, general))


def swap_best(sol: Solution, ctx: EvalContext, depth: int | None = None) -> Move | None:
    u, v = ctx.pairs(sol.n_ext, depth)
    i, j = _swap_cands(sol, u, v)
    A = ctx.aug_ext(sol.n_ext)
    k = _pick(_swap_delta(A, sol, i, j))
    if k is None:
        return None
    i, j = i[k : k + 1], j[k : k + 1]
    D = ctx.dist_ext(sol.n_ext)
    return Move(
        Op.SWAP,
        (int(i[0]), int(j[0])),
        float(_swap_delta(D, sol, i, j)[0]),
        float(_swap_delta(A, sol, i, j)[0]),
        sol.generation,
    )


# -- three-permutation ----------------------------------------------------------


def _windows(sol: Solution):
    seq = sol.seq
    E = len(seq)
    if isinstance(sol, RouteSet):
        t = np.arange(E)
        ok = ~sol.is_depot[seq] & ~sol.is_depot[np.roll(seq, -1)] & ~sol.is_depot[np.roll(seq, -2)]
        t = t[ok]
    elif E >= 4:
        t = np.arange(E)
    else:
        t = np.arange(0)
    idx = (t[:, None] + np.arange(-1, 4)[None, :]) % E
    return seq[idx]  # columns: p, a, b, c, s


def _three_perm_deltas(W, win):
    p, s = win[:, 0], win[:, 4]
    abc = win[:, 1:4]
    base = W[p, abc[:, 0]] + W[abc[:, 0], abc[:, 1]] + W[abc[:, 1], abc[:, 2]] + W[abc[:, 2], s]
    out = np.empty((len(win), len(THREE_PERMS)))
    for k, (x, y, z) in enumerate(THREE_PERMS):
        X, Y, Z = abc[:, x], abc[:, y], abc[:, z]
        out[:, k] = W[p, X] + W[X, Y] + W[Y, Z] + W[Z, s] - base
    return out


def three_perm_best(sol: Solution, ctx: EvalContext, depth: int | None = None) -> Move | None:
    win = _windows(sol)
    if len(win) == 0:
        return None
    A = ctx.aug_ext(sol.n_ext)
    da = _three_perm_deltas(A, win)
    k = _pick(da.reshape(-1))
    if k is None:
        return None
    w, perm = divmod(k, len(THREE_PERMS))
    dt = _three_perm_deltas(ctx.dist_ext(sol.n_ext), win[w : w + 1])[0, perm]
    return Move(Op.THREE_PERM, (int(win[w, 1]), perm), float(dt), float(da[w, perm]), sol.generation)


def candidate_moves(sol: Solution, ctx: EvalContext, op: Op, depth: int | None = None) -> list[Move]:
    """Every valid move the operator considers, improving or not."""
    op = Op(op)
    D, A = ctx.dist_ext(sol.n_ext), ctx.aug_ext(sol.n_ext)
    if op is Op.THREE_PERM:
        win = _windows(sol)
        if len(win) == 0:
            return []
        dt, da = _three_perm_deltas(D, win), _three_perm_deltas(A, win)
        return [
            Move(op, (int(win[w, 1]), k), float(dt[w, k]), float(da[w, k]), sol.generation)
            for w in range(len(win))
            for k in range(len(THREE_PERMS))
        ]
    cands, delta = {
        Op.TWO_OPT: (_two_opt_ends, _two_opt_delta),
        Op.RELOCATE: (_relocate_cands, _relocate_delta),
        Op.SWAP: (_swap_cands, _swap_delta),
    }[op]
    x, y = cands(sol, *ctx.pairs(sol.n_ext, depth))
    dt, da = delta(D, sol, x, y), delta(A, sol, x, y)
    return [Move(op, (int(p), int(q)), float(t), float(g), sol.generation) for p, q, t, g in zip(x, y, dt, da)]


OPERATORS = {
    Op.TWO_OPT: two_opt_best,
    Op.RELOCATE: relocate_best,
    Op.SWAP: swap_best,
    Op.THREE_PERM: three_perm_best,
}


# -- application ------------------------------------------------------------


def _reverse(seq: np.ndarray, start: int, length: int):
    E = len(seq)
    idx = (start + np.arange(length)) % E
    seq[idx] = seq[idx[::-1]]


def apply_move(sol: Solution, m: Move):
    if m.generation != sol.generation:
        raise StaleMoveError(f"move built at generation {m.generation}, solution is at {sol.generation}")
    seq, pos = sol.seq, sol.pos
    E = len(seq)
    if m.op is Op.TWO_OPT:
        a, b = m.params
        inner = (pos[b] - pos[a]) % E  # nodes a+ .. b
        if isinstance(sol, RouteSet) or inner <= E - inner:
            _reverse(seq, pos[a] + 1, inner)
        else:
            _reverse(seq, pos[b] + 1, E - inner)  # b+ .. a, same cycle
    elif m.op is Op.RELOCATE:
        i, j = m.params
        rest = np.delete(seq, pos[i])
        at = int(np.flatnonzero(rest == j)[0]) + 1
        sol.seq = np.insert(rest, at, i)
    elif m.op is Op.SWAP:
        i, j = m.params
        pi, pj = pos[i], pos[j]
        seq[pi], seq[pj] = j, i
    elif m.op is Op.THREE_PERM:
        a, perm = m.params
        idx = (pos[a] + np.arange(3)) % E
        window = seq[idx].copy()
        seq[idx] = window[list(THREE_PERMS[perm])]
    else:
        raise InvalidArgumentError(f"unknown operator {m.op}")
    sol._touch(m.delta_true)
