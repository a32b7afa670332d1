import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_difference
from l2gls.errors import ShapeError, TrainingDivergedError
from l2gls.instance import GenSpec, Kind, generate_cvrp, generate_uniform_tsp
from l2gls.policy import (
    CHECKPOINT_MAGIC,
    CVRP_NODE_DIM,
    PARAM_ORDER,
    TSP_NODE_DIM,
    History,
    Policy,
    Sample,
    StateFeatures,
    extract_features,
    reinforce_update,
    reward_advantage,
    reward_binary,
    sample_action,
)
from l2gls.solution import RouteSet, Tour, free_capacity, initial_solution


def _state(rng, n, input_dim, H, A):
    return StateFeatures(rng.normal(size=(n, input_dim)), rng.normal(size=(H, A + 1)))


def _small(seed, input_dim=5, A=3, H=2):
    return Policy.create(input_dim, A, seed=seed, zero_final=False, embed_dim=8, n_heads=2, hidden_dim=16, history_len=H)


# -- features


def test_feature_rows_tsp():
    inst = generate_uniform_tsp(3, 0)
    s = extract_features(inst, Tour(inst, [0, 1, 2]), History(8), 7)
    assert s.nodes.shape == (3, TSP_NODE_DIM)
    row = s.nodes[1]
    c, d = inst.coords, inst.dist
    assert np.allclose(row[:2], c[1])
    assert np.allclose(row[2:4], c[0])
    assert np.allclose(row[4:6], c[2])
    assert np.allclose(row[6:], [d[0, 1], d[1, 2], d[0, 2]])
    assert s.history.shape == (8, 8)


def test_reversal_swaps_neighbour_blocks():
    inst = generate_uniform_tsp(10, 3)
    order = list(np.random.default_rng(3).permutation(10))
    fwd = extract_features(inst, Tour(inst, order), None, 7).nodes
    rev = extract_features(inst, Tour(inst, order[::-1]), None, 7).nodes
    assert np.allclose(fwd[:, 2:4], rev[:, 4:6])
    assert np.allclose(fwd[:, 4:6], rev[:, 2:4])
    assert np.allclose(fwd[:, 6], rev[:, 7])
    assert np.allclose(fwd[:, 8], rev[:, 8])


@given(st.integers(2, 20), st.integers(0, 999))
def test_cvrp_free_capacity_feature(n, seed):
    inst = generate_cvrp(GenSpec(n, seed))
    rs = initial_solution(inst, seed)
    s = extract_features(inst, rs, None, 7)
    assert s.nodes.shape == (inst.n, CVRP_NODE_DIM)
    for c in range(1, inst.n):
        assert s.nodes[c, 10] * inst.capacity == pytest.approx(free_capacity(rs, c))
        assert s.nodes[c, 9] * inst.capacity == pytest.approx(inst.demands[c])


def test_history_encoding():
    h = History(3)
    h.push(2, 1)
    h.push(0, -1)
    enc = h.encode(4)
    assert enc.shape == (3, 5)
    assert enc[0].tolist() == [1, 0, 0, 0, -1]  # most recent first
    assert enc[1].tolist() == [0, 0, 1, 0, 1]
    assert not enc[2].any()
    with pytest.raises(ValueError):
        h.push(1, 0)


# -- forward


@given(st.integers(0, 10_000), st.integers(1, 30))
def test_forward_is_a_distribution(seed, n):
    rng = np.random.default_rng(seed)
    pol = _small(seed)
    p = pol.forward(_state(rng, n, 5, 2, 3))
    assert p.shape == (3,)
    assert abs(p.sum() - 1.0) <= 1e-9
    assert (p >= 0).all()


def test_zero_final_layer_is_uniform():
    pol = Policy.create(TSP_NODE_DIM, 7, seed=1)
    s = _state(np.random.default_rng(0), 20, TSP_NODE_DIM, 8, 7)
    assert np.allclose(pol.forward(s), 1 / 7)


def test_mask_zeroes_excluded_actions():
    pol = _small(2)
    s = _state(np.random.default_rng(1), 6, 5, 2, 3)
    p = pol.forward(s, np.array([True, False, True]))
    assert p[1] == 0.0 and p.sum() == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_node_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    pol = _small(seed)
    s = _state(rng, 9, 5, 2, 3)
    perm = rng.permutation(9)
    t = StateFeatures(s.nodes[perm], s.history)
    assert np.allclose(pol.encode(s), pol.encode(t), atol=1e-12)
    assert np.allclose(pol.forward(s), pol.forward(t), atol=1e-12)


def test_shape_errors():
    pol = _small(0)
    with pytest.raises(ShapeError):
        pol.forward(StateFeatures(np.zeros((4, 6)), np.zeros((2, 4))))
    with pytest.raises(ShapeError):
        pol.forward(StateFeatures(np.zeros((4, 5)), np.zeros((3, 4))))
    with pytest.raises(ShapeError):
        Policy.create(5, 3, embed_dim=10, n_heads=4)


def test_default_dimensions():
    pol = Policy.create(TSP_NODE_DIM, 7)
    sh = pol.shapes()
    assert sh["W_emb"] == (9, 64)
    assert sh["Wq"] == (64, 64)
    assert sh["W1"] == (64 + 8 * 8, 128)
    assert sh["W2"] == (128, 7)


# -- gradients


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pol = _small(seed, A=2 + seed % 3)
    s = _state(rng, 3 + seed, 5, 2, pol.n_actions)
    action = int(rng.integers(pol.n_actions))
    _, grads = pol.grad_log_prob(s, action)
    worst = 0.0
    for name in PARAM_ORDER:
        num = central_difference(lambda: float(np.log(pol.forward(s)[action])), pol.params[name])
        # entries below 1e-7 sit at the stencil's round-off floor
        scale = np.maximum(np.maximum(np.abs(grads[name]), np.abs(num)), 1e-7)
        err = np.abs(grads[name] - num) / scale
        worst = max(worst, float(err.max()))
    assert worst < 1e-4


# -- sampling


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(0)
    counts = np.bincount([sample_action([1, 0, 0, 0], 1.0, rng) for _ in range(10_000)], minlength=4)
    sigma = np.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 2500) <= 3 * sigma)


def test_epsilon_zero_one_hot():
    rng = np.random.default_rng(1)
    assert all(sample_action([0, 0, 1, 0], 0.0, rng) == 2 for _ in range(1000))


def test_epsilon_mixture_stays_uniform():
    rng = np.random.default_rng(2)
    counts = np.bincount([sample_action(np.full(5, 0.2), 0.05, rng) for _ in range(10_000)], minlength=5)
    sigma = np.sqrt(10_000 * 0.2 * 0.8)
    assert np.all(np.abs(counts - 2000) <= 3 * sigma)


def test_exploration_respects_mask():
    rng = np.random.default_rng(3)
    mask = np.array([True, False, True])
    assert {sample_action([0.5, 0, 0.5], 1.0, rng, mask) for _ in range(500)} == {0, 2}


# -- rewards


def test_binary_reward():
    assert reward_binary(10.0, 9.5) == 1
    assert reward_binary(10.0, 10.0) == -1
    assert reward_binary(10.0, 10.5) == -1


def test_advantage_reward():
    assert reward_advantage(10.0, 9.2) == pytest.approx(0.8)
    assert reward_advantage(7.0, 7.0) == 0.0


def test_advantage_rewards_telescope():
    from l2gls.search import SearchConfig, Trainer, solve

    class Recorder(Trainer):
        def __init__(self, policy):
            super().__init__(policy)
            self.phases = []

        def end_phase(self, first_cost, final_cost):
            if self.samples:
                self.phases.append(reward_advantage(first_cost, final_cost))
            super().end_phase(first_cost, final_cost)

    inst = generate_uniform_tsp(15, 4)
    rec = Recorder(Policy.create(TSP_NODE_DIM, 7, seed=0))
    res = solve(inst, SearchConfig(max_steps=300, seed=1), trainer=rec)
    first = res.cost_trace[0][1]
    last = res.cost_trace[-1][1]
    assert sum(rec.phases) == pytest.approx(first - last, abs=1e-9)


# -- REINFORCE


def test_zero_advantage_leaves_parameters():
    pol = _small(5)
    before = {k: p.copy() for k, p in pol.params.items()}
    s = _state(np.random.default_rng(0), 4, 5, 2, 3)
    traj = [Sample(s, a, 1.0, 0.0) for a in range(3)]
    reinforce_update(pol, traj, baseline=1.0)
    assert all(np.array_equal(before[k], pol.params[k]) for k in before)


def test_bandit_learns_the_good_action():
    rng = np.random.default_rng(0)
    pol = Policy.create(4, 2, seed=0, embed_dim=8, n_heads=2, hidden_dim=16, history_len=2)
    states = [_state(rng, 5, 4, 2, 2) for _ in range(2)]
    for t in range(500):
        s = states[t % 2]
        a = sample_action(pol.forward(s), 0.0, rng)
        reinforce_update(pol, [Sample(s, a, 1.0 if a == 0 else -1.0, 0.0)], baseline=0.0)
    assert all(pol.forward(s)[0] > 0.95 for s in states)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_gradient_raises():
    pol = _small(0)
    s = _state(np.random.default_rng(0), 4, 5, 2, 3)
    with pytest.raises(TrainingDivergedError):
        reinforce_update(pol, [Sample(s, 0, np.inf, 0.0)], baseline=0.0)
    with pytest.raises(ValueError):
        reinforce_update(pol, [])


# -- checkpoints


def test_checkpoint_round_trip(tmp_path):
    pol = _small(7)
    s = _state(np.random.default_rng(0), 6, 5, 2, 3)
    path = tmp_path / "p.bin"
    pol.save(path)
    back = Policy.load(path)
    assert np.array_equal(pol.forward(s), back.forward(s))
    data = path.read_bytes()
    assert data[:8] == CHECKPOINT_MAGIC
    assert len(data) == 8 + 28 + 8 * pol.num_params()


def test_corrupt_checkpoint():
    with pytest.raises(ValueError):
        Policy.from_bytes(b"NOTAPOLICY" + bytes(40))
    data = _small(0).to_bytes()
    with pytest.raises(ValueError):
        Policy.from_bytes(data + b"\0")
