import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import aug_routes_cost, aug_tour_cost, route_neighbours, tour_neighbours
from l2gls.errors import InvalidArgumentError, StaleMoveError
from l2gls.gls import PenaltyState, augmented_cost
from l2gls.instance import GenSpec, Kind, RoutingInstance, generate_cvrp, generate_uniform_tsp
from l2gls.operators import (
    IMPROVE_EPS,
    OPERATORS,
    EvalContext,
    Move,
    Op,
    apply_move,
    build_candidate_lists,
    candidate_moves,
    relocate_best,
    swap_best,
    three_perm_best,
    two_opt_best,
)
from l2gls.solution import RouteSet, Tour, initial_solution, validate


def _tsp(points):
    return RoutingInstance(Kind.TSP, np.array(points, dtype=float))


def _random_penalties(n, seed, count=15, lam=0.3):
    rng = np.random.default_rng(seed)
    ps = PenaltyState(n, lam)
    for _ in range(count):
        i, j = rng.choice(n, 2, replace=False)
        ps.increment(i, j, int(rng.integers(1, 4)))
    return ps


def _edge_set(order):
    n = len(order)
    return {frozenset((order[i], order[(i + 1) % n])) for i in range(n)}


# -- candidate lists


def test_full_candidate_lists_are_sorted_neighbours():
    inst = generate_uniform_tsp(9, 4)
    cand = build_candidate_lists(inst, 8)
    for i in range(9):
        others = sorted((j for j in range(9) if j != i), key=lambda j: (inst.dist[i, j], j))
        assert cand[i] == others


def test_square_nearest_neighbour_is_adjacent_corner():
    sq = _tsp([[0, 0], [1, 0], [1, 1], [0, 1]])
    cand = build_candidate_lists(sq, 1)
    for i in range(4):
        assert sq.dist[i, cand[i][0]] == 1.0


def test_candidate_lists_match_sort_and_truncate():
    inst = generate_uniform_tsp(50, 8)
    cand = build_candidate_lists(inst, 10)
    for i in range(50):
        d = [(inst.dist[i, j], j) for j in range(50) if j != i]
        assert cand[i] == [j for _, j in sorted(d)[:10]]


def test_candidate_k_out_of_range():
    with pytest.raises(InvalidArgumentError):
        build_candidate_lists(generate_uniform_tsp(5, 0), 5)


# -- hand examples


def test_collinear_two_opt():
    inst = _tsp([[0, 0], [1, 0], [2, 0], [3, 0]])
    sol = Tour(inst, [0, 2, 1, 3])
    m = two_opt_best(sol, EvalContext(inst, k=3))
    assert m.delta_true == pytest.approx(-2.0)
    apply_move(sol, m)
    assert _edge_set(sol.order) == _edge_set([0, 1, 2, 3])
    assert sol.recompute_cost() == pytest.approx(6.0)


def test_convex_optimum_has_no_improving_moves():
    hexagon = _tsp([[np.cos(t), np.sin(t)] for t in np.linspace(0, 2 * np.pi, 7)[:-1]])
    sol = Tour(hexagon, range(6))
    ctx = EvalContext(hexagon, k=5)
    for op in OPERATORS.values():
        assert op(sol, ctx) is None


def test_penalty_forces_edge_removal():
    inst = _tsp([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, -0.2]])
    sol = Tour(inst, [0, 4, 1, 2, 3])
    ps = PenaltyState(inst.n, 0.3)
    ctx = EvalContext(inst, ps, k=4)
    assert two_opt_best(sol, ctx) is None
    ps.increment(2, 3, 100)
    m = two_opt_best(sol, ctx)
    assert m.delta_true > 0
    apply_move(sol, m)
    assert frozenset((2, 3)) not in _edge_set(sol.order)
    assert augmented_cost(sol, ps) < sol.recompute_cost() + 0.3 * 100


def test_relocate_absent_on_square():
    sq = _tsp([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert relocate_best(Tour(sq, [0, 1, 2, 3]), EvalContext(sq, k=3)) is None


def test_relocate_respects_capacity():
    coords = [[0.5, 0.5], [0.1, 0.1], [0.9, 0.9], [0.85, 0.9], [0.9, 0.85]]
    inst = RoutingInstance(Kind.CVRP, np.array(coords), np.array([0, 5, 3, 2, 2]), 10)
    rs = RouteSet(inst, [[1], [2, 3, 4]])  # free capacity 3 on the second route
    ctx = EvalContext(inst, k=4)
    for m in candidate_moves(rs, ctx, Op.RELOCATE):
        i, j = m.params
        if i == 1:
            assert rs.rid[j] != rs.rid[2]
    m = relocate_best(rs, ctx)
    if m is not None:
        assert m.params[0] != 1 or rs.rid[m.params[1]] != rs.rid[2]


def test_swap_never_pairs_a_node_with_itself():
    inst = generate_cvrp(GenSpec(10, 1))
    rs = initial_solution(inst, 1)
    for m in candidate_moves(rs, EvalContext(inst, k=10), Op.SWAP):
        assert m.params[0] != m.params[1]
    tour = initial_solution(generate_uniform_tsp(10, 1), 1)
    for m in candidate_moves(tour, EvalContext(tour.inst, k=9), Op.SWAP):
        assert m.params[0] != m.params[1]


def test_inter_route_swap_fixture():
    coords = [[0, 0], [-1, 0], [-1, 0.1], [1, 0], [1, 0.1]]
    inst = RoutingInstance(Kind.CVRP, np.array(coords, dtype=float), np.array([0, 5, 5, 5, 5]), 10)
    rs = RouteSet(inst, [[1, 3], [2, 4]])  # both routes full and crossing
    ctx = EvalContext(inst, k=4)
    assert relocate_best(rs, ctx) is None or relocate_best(rs, ctx).delta_aug > -1.0
    m = swap_best(rs, ctx)
    before = rs.recompute_cost()
    assert m is not None and m.delta_true < 0
    apply_move(rs, m)
    assert rs.recompute_cost() == pytest.approx(before + m.delta_true, abs=1e-12)
    assert sorted(sorted(r) for r in rs.routes) == [[1, 2], [3, 4]]
    assert validate(inst, rs) == []


def test_adjacent_swap_deltas():
    inst = generate_uniform_tsp(8, 3)
    sol = initial_solution(inst, 3)
    ctx = EvalContext(inst, k=7)
    adjacent = [m for m in candidate_moves(sol, ctx, Op.SWAP) if sol.succ[m.params[0]] == m.params[1] or sol.succ[m.params[1]] == m.params[0]]
    assert adjacent
    for m in adjacent:
        trial = sol.copy()
        order = trial.order
        a, b = order.index(m.params[0]), order.index(m.params[1])
        order[a], order[b] = order[b], order[a]
        assert Tour(inst, order).recompute_cost() - sol.recompute_cost() == pytest.approx(m.delta_true, abs=1e-12)


def test_three_perm_window():
    inst = _tsp([[0, 0], [1, 0], [2, 0], [3, 0], [4, 0], [2, 1]])
    ctx = EvalContext(inst, k=5)
    assert three_perm_best(Tour(inst, [0, 1, 2, 3, 4, 5]), ctx) is None
    sol = Tour(inst, [0, 2, 1, 3, 4, 5])
    m = three_perm_best(sol, ctx)
    assert m is not None and m.delta_true < 0
    before = sol.recompute_cost()
    apply_move(sol, m)
    assert sol.recompute_cost() == pytest.approx(before + m.delta_true, abs=1e-12)


# -- exhaustive oracles


def _check_best_tsp(inst, ps, sol, op):
    ctx = EvalContext(inst, ps, k=inst.n - 1)
    order = sol.order
    P = ps.matrix
    cur = aug_tour_cost(inst.dist, P, ps.lam, order)
    deltas = [aug_tour_cost(inst.dist, P, ps.lam, t) - cur for t in tour_neighbours(order, op.value)]
    m = OPERATORS[op](sol, ctx)
    best = min(deltas, default=0.0)
    if best < -1e-7:
        assert m is not None
        assert m.delta_aug == pytest.approx(best, abs=1e-9)
    elif best > -1e-12:
        assert m is None


@given(st.integers(5, 12), st.integers(0, 10_000), st.sampled_from(list(Op)))
def test_tsp_best_move_equals_enumeration(n, seed, op):
    inst = generate_uniform_tsp(n, seed)
    ps = _random_penalties(n, seed)
    _check_best_tsp(inst, ps, initial_solution(inst, seed), op)


@given(st.integers(3, 9), st.integers(0, 10_000), st.sampled_from(list(Op)))
def test_cvrp_best_move_equals_enumeration(n, seed, op):
    inst = generate_cvrp(GenSpec(n, seed, capacity=15))
    ps = _random_penalties(inst.n, seed)
    rs = initial_solution(inst, seed)
    ctx = EvalContext(inst, ps, k=inst.n - 1)
    P = ps.matrix
    cur = aug_routes_cost(inst.dist, P, ps.lam, rs.routes)
    deltas = [
        aug_routes_cost(inst.dist, P, ps.lam, r) - cur
        for r in route_neighbours(rs.routes, op.value, inst.demands, inst.capacity)
    ]
    m = OPERATORS[op](rs, ctx)
    best = min(deltas, default=0.0)
    if best < -1e-7:
        assert m is not None
        assert m.delta_aug == pytest.approx(best, abs=1e-9)
    elif best > -1e-12:
        assert m is None


@given(st.integers(4, 15), st.integers(0, 10_000), st.booleans())
def test_every_candidate_move_delta_matches_recomputation(n, seed, cvrp):
    inst = generate_cvrp(GenSpec(n, seed)) if cvrp else generate_uniform_tsp(n, seed)
    ps = _random_penalties(inst.n, seed)
    ctx = EvalContext(inst, ps, k=inst.n - 1)
    sol = initial_solution(inst, seed)
    L, h = sol.recompute_cost(), augmented_cost(sol, ps)
    for op in Op:
        for m in candidate_moves(sol, ctx, op):
            trial = sol.copy()
            apply_move(trial, m)
            assert trial.recompute_cost() - L == pytest.approx(m.delta_true, abs=1e-9)
            assert augmented_cost(trial, ps) - h == pytest.approx(m.delta_aug, abs=1e-9)
            assert validate(inst, trial) == []


def test_depth_restricts_neighbourhood():
    inst = generate_uniform_tsp(30, 2)
    sol = initial_solution(inst, 2)
    ctx = EvalContext(inst, k=10)
    near = {m.params for m in candidate_moves(sol, ctx, Op.SWAP, depth=5)}
    full = {m.params for m in candidate_moves(sol, ctx, Op.SWAP)}
    assert near < full


# -- application


def test_two_opt_involution():
    inst = generate_uniform_tsp(12, 6)
    sol = initial_solution(inst, 6)
    original = _edge_set(sol.order)
    m = candidate_moves(sol, EvalContext(inst, k=11), Op.TWO_OPT)[3]
    a, b = m.params
    sa = int(sol.succ[a])
    apply_move(sol, m)
    undo = Move(Op.TWO_OPT, (a, sa), -m.delta_true, -m.delta_aug, sol.generation)
    apply_move(sol, undo)
    assert _edge_set(sol.order) == original
    assert sol.cost == pytest.approx(sol.recompute_cost(), abs=1e-12)


def test_stale_move_is_rejected():
    inst = generate_uniform_tsp(10, 1)
    sol = initial_solution(inst, 1)
    ms = candidate_moves(sol, EvalContext(inst, k=9), Op.SWAP)
    apply_move(sol, ms[0])
    with pytest.raises(StaleMoveError):
        apply_move(sol, ms[1])


@pytest.mark.parametrize("cvrp", [False, True])
def test_no_cost_drift_over_ten_thousand_moves(cvrp):
    inst = generate_cvrp(GenSpec(25, 3)) if cvrp else generate_uniform_tsp(25, 3)
    ps = _random_penalties(inst.n, 3)
    ctx = EvalContext(inst, ps, k=10)
    sol = initial_solution(inst, 3)
    rng = np.random.default_rng(0)
    ops = list(Op)
    applied = 0
    while applied < 10_000:
        ms = candidate_moves(sol, ctx, ops[applied % 4])
        if not ms:
            applied += 1
            continue
        apply_move(sol, ms[rng.integers(len(ms))])
        applied += 1
    assert abs(sol.cost - sol.recompute_cost()) <= 1e-9
    assert validate(inst, sol) == []


def test_improve_threshold_constant():
    assert IMPROVE_EPS == 1e-9
