import io
import json

import numpy as np
import pytest

from oracles import brute_force_cvrp, brute_force_tsp
from l2gls.errors import InvalidArgumentError
from l2gls.instance import GenSpec, Kind, RoutingInstance, generate_cvrp, generate_uniform_tsp
from l2gls.policy import Policy, TSP_NODE_DIM
from l2gls.search import (
    CATALOG,
    RewardVariant,
    SearchConfig,
    Variant,
    action_catalog,
    catalog_mask,
    detect_local_min,
    random_instance,
    run_variant,
    solve,
    train,
)
from l2gls.solution import validate

TSP7_SEED42_OPT = 2.272034960165557  # frozen from oracles.brute_force_tsp


def test_detect_local_min():
    assert not detect_local_min(5, 6)
    assert detect_local_min(6, 6)
    assert not detect_local_min(0, 6)


def test_config_defaults_and_validation():
    cfg = SearchConfig()
    assert (cfg.max_steps, cfg.stall_threshold, cfg.epsilon, cfg.lam) == (40000, 6, 0.05, 0.3)
    assert cfg.reward_variant is RewardVariant.ADVANTAGE
    for bad in (dict(max_steps=0), dict(stall_threshold=0), dict(epsilon=1.5), dict(lam=-1.0)):
        with pytest.raises(InvalidArgumentError):
            SearchConfig(**bad)
    with pytest.raises(ValueError):
        SearchConfig(variant="L2GLS9")


def test_catalog_masks():
    names = [a.name for a in CATALOG]
    assert names == ["TWO_OPT", "TWO_OPT@5", "RELOCATE", "RELOCATE@5", "SWAP", "SWAP@5", "THREE_PERM"]
    assert catalog_mask("L2GLS").all() and catalog_mask("NO_PENALTY").all()
    assert "THREE_PERM" not in [a.name for a in action_catalog("L2GLS2")]
    assert not any(a.name.startswith("RELOCATE") for a in action_catalog("L2GLS3"))
    with pytest.raises(InvalidArgumentError):
        catalog_mask("nope")


def test_square_solved_in_few_steps():
    sq = RoutingInstance(Kind.TSP, np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float))
    res = solve(sq, SearchConfig(max_steps=200, seed=0))
    assert res.best_cost == pytest.approx(4.0, abs=1e-9)
    first_best = next(step for step, _, best in res.cost_trace if abs(best - 4.0) < 1e-9)
    assert first_best < 50


def test_tsp7_reaches_enumeration_optimum():
    inst = generate_uniform_tsp(7, 42)
    assert brute_force_tsp(inst.dist)[0] == pytest.approx(TSP7_SEED42_OPT, abs=1e-12)
    res = solve(inst, SearchConfig(max_steps=5000, candidate_k=6, seed=0))
    assert res.best_cost == pytest.approx(TSP7_SEED42_OPT, abs=1e-9)
    assert res.steps_executed == 5000


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_small_cvrp_reaches_brute_force_optimum(seed):
    inst = generate_cvrp(GenSpec(6, seed, capacity=10))
    res = solve(inst, SearchConfig(max_steps=3000, seed=seed))
    assert res.best_cost == pytest.approx(brute_force_cvrp(inst.dist, inst.demands, 10), abs=1e-9)
    assert validate(inst, res.best_solution) == []


def test_no_penalty_variant_never_penalizes():
    inst = generate_uniform_tsp(15, 1)
    res = run_variant("NO_PENALTY", inst, SearchConfig(max_steps=1000))
    assert res.penalty_events == 0
    assert all(e.kind != "PENALTY" for e in res.events)
    assert res.penalties == []


def test_variant_catalog_filters_events():
    inst = generate_uniform_tsp(20, 2)
    kinds2 = {e.kind for e in run_variant("L2GLS2", inst, SearchConfig(max_steps=2000)).events}
    kinds3 = {e.kind for e in run_variant("L2GLS3", inst, SearchConfig(max_steps=2000)).events}
    assert "THREE_PERM" not in kinds2
    assert not any(k.startswith("RELOCATE") for k in kinds3)
    full = {e.kind for e in solve(inst, SearchConfig(max_steps=2000)).events}
    assert "PENALTY" in full


def test_unknown_variant_rejected():
    with pytest.raises(InvalidArgumentError):
        run_variant("BOGUS", generate_uniform_tsp(5, 0))


def test_solve_is_deterministic():
    inst = generate_cvrp(GenSpec(20, 3))
    a = solve(inst, SearchConfig(max_steps=1500, seed=4))
    b = solve(inst, SearchConfig(max_steps=1500, seed=4))
    assert a.best_cost == b.best_cost
    assert a.best_solution.routes == b.best_solution.routes
    assert [(e.step, e.kind) for e in a.events] == [(e.step, e.kind) for e in b.events]


def test_trace_lines_are_json():
    buf = io.StringIO()
    res = solve(generate_uniform_tsp(12, 0), SearchConfig(max_steps=300), trace=buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == len(res.events)
    rec = json.loads(lines[0])
    assert set(rec) == {"step", "kind", "detail", "delta_true", "current", "best"}


def test_cost_trace_and_best_are_consistent():
    inst = generate_uniform_tsp(25, 9)
    res = solve(inst, SearchConfig(max_steps=2000, seed=1))
    steps = [s for s, _, _ in res.cost_trace]
    assert steps == sorted(steps) and steps[-1] == res.steps_executed
    bests = [b for _, _, b in res.cost_trace]
    assert all(x >= y - 1e-12 for x, y in zip(bests, bests[1:]))
    assert res.best_cost == pytest.approx(min(bests), abs=1e-12)
    assert res.best_cost == pytest.approx(res.best_solution.recompute_cost(), abs=1e-12)


def test_time_limit_stops_early():
    res = solve(generate_uniform_tsp(60, 0), SearchConfig(max_steps=10**7, time_limit=0.3))
    assert res.steps_executed < 10**7
    assert res.wall_time < 3.0


def test_patience_stops_early():
    res = solve(generate_uniform_tsp(10, 0), SearchConfig(max_steps=50_000, patience=3))
    assert res.steps_executed < 50_000


def test_raw_instances_are_normalized_and_reported_in_raw_units():
    inst = generate_uniform_tsp(12, 5)
    big = inst.with_coords(inst.coords * 1000.0, 1.0, (0.0, 0.0))
    a = solve(inst, SearchConfig(max_steps=3000, seed=2))
    b = solve(big, SearchConfig(max_steps=3000, seed=2))
    assert b.best_cost == pytest.approx(1000.0 * a.best_cost, rel=1e-6)


def test_policy_shape_mismatch_rejected():
    pol = Policy.create(TSP_NODE_DIM, 3)
    with pytest.raises(InvalidArgumentError):
        solve(generate_uniform_tsp(8, 0), SearchConfig(max_steps=10), pol)
    pol = Policy.create(TSP_NODE_DIM, len(CATALOG))
    with pytest.raises(InvalidArgumentError):
        solve(generate_cvrp(GenSpec(8, 0)), SearchConfig(max_steps=10), pol)


def test_solve_with_policy_on_cvrp():
    from l2gls.policy import CVRP_NODE_DIM

    pol = Policy.create(CVRP_NODE_DIM, len(CATALOG), seed=1, zero_final=False)
    inst = generate_cvrp(GenSpec(15, 2))
    res = solve(inst, SearchConfig(max_steps=500), pol)
    assert validate(inst, res.best_solution) == []


def test_train_rejects_zero_episodes():
    with pytest.raises(InvalidArgumentError):
        train("TSP", 10, SearchConfig(max_steps=100), 0)


@pytest.mark.parametrize("reward", ["ADVANTAGE", "BINARY"])
def test_train_updates_the_policy(reward):
    log = []
    pol = train("TSP", 10, SearchConfig(max_steps=200, reward_variant=reward, seed=3), 3, log=log)
    assert len(log) == 3 and log[-1][2] > 0
    assert pol.step > 0
    assert np.any(pol.params["W2"] != 0)


def test_train_is_deterministic():
    cfg = SearchConfig(max_steps=150, seed=5)
    a = train("TSP", 8, cfg, 2)
    b = train("TSP", 8, cfg, 2)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_random_instance_dispatch():
    assert random_instance("TSP", 10, 1).kind is Kind.TSP
    assert random_instance(Kind.CVRP, 10, 1).n == 11
