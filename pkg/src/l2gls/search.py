"""The guided search loop and policy training.

Each step the manager picks an action (operator + neighbourhood preset), the
operator's best move on the augmented objective is applied, and a counter of
consecutive steps without a true-cost reduction is kept.  When it reaches
``stall_threshold`` the current solution is a local minimum: penalties are
added (unless the variant disables them) and a new improvement phase starts.
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError, ValidationError
from .gls import DEFAULT_LAMBDA, PenaltyState, penalize
from .instance import GenSpec, Kind, RoutingInstance, generate_cvrp, generate_uniform_tsp, normalize
from .operators import OPERATORS, EvalContext, Op, apply_move, build_candidate_lists, default_k
from .policy import (
    HISTORY_LEN,
    History,
    Policy,
    Sample,
    extract_features,
    node_dim,
    reinforce_update,
    reward_advantage,
    reward_binary,
    sample_action,
)
from .rng import as_rng, child_seed, make_rng
from .solution import Solution, initial_solution, reported_cost, validate

IMPROVE_TOL = 1e-12
NEAR_DEPTH = 5
BASELINE_DECAY = 0.9


class Variant(str, enum.Enum):
    L2GLS = "L2GLS"
    L2GLS2 = "L2GLS2"  # no three-permutation
    L2GLS3 = "L2GLS3"  # no relocate
    NO_PENALTY = "NO_PENALTY"


class RewardVariant(str, enum.Enum):
    BINARY = "BINARY"
    ADVANTAGE = "ADVANTAGE"


@dataclass(frozen=True)
class Action:
    op: Op
    depth: int | None  # candidate-list depth; None = the full list

    @property
    def name(self) -> str:
        return self.op.value if self.depth is None else f"{self.op.value}@{self.depth}"


# every operator on the full candidate lists, plus a near-neighbour preset
# for the pairwise operators
CATALOG: tuple[Action, ...] = (
    Action(Op.TWO_OPT, None),
    Action(Op.TWO_OPT, NEAR_DEPTH),
    Action(Op.RELOCATE, None),
    Action(Op.RELOCATE, NEAR_DEPTH),
    Action(Op.SWAP, None),
    Action(Op.SWAP, NEAR_DEPTH),
    Action(Op.THREE_PERM, None),
)

_EXCLUDED = {
    Variant.L2GLS: set(),
    Variant.L2GLS2: {Op.THREE_PERM},
    Variant.L2GLS3: {Op.RELOCATE},
    Variant.NO_PENALTY: set(),
}


def catalog_mask(variant) -> np.ndarray:
    try:
        excluded = _EXCLUDED[Variant(variant)]
    except ValueError:
        raise InvalidArgumentError(f"unknown variant {variant!r}") from None
    return np.array([a.op not in excluded for a in CATALOG])


def action_catalog(variant) -> list[Action]:
    mask = catalog_mask(variant)
    return [a for a, keep in zip(CATALOG, mask) if keep]


@dataclass(frozen=True)
class SearchConfig:
    max_steps: int = 40000
    stall_threshold: int = 6
    epsilon: float = 0.05
    lam: float = DEFAULT_LAMBDA
    reward_variant: RewardVariant = RewardVariant.ADVANTAGE
    variant: Variant = Variant.L2GLS
    candidate_k: int | None = None
    seed: int = 0
    time_limit: float | None = None
    patience: int | None = None  # penalty phases without a new best before stopping
    history_len: int = HISTORY_LEN
    trace_every: int = 0  # 0 = about 200 samples per run

    def __post_init__(self):
        object.__setattr__(self, "reward_variant", RewardVariant(self.reward_variant))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.max_steps <= 0:
            raise InvalidArgumentError("max_steps must be positive")
        if self.stall_threshold <= 0:
            raise InvalidArgumentError("stall_threshold must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidArgumentError("epsilon must be in [0, 1]")
        if self.lam < 0:
            raise InvalidArgumentError("lambda must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reward_variant"] = self.reward_variant.value
        d["variant"] = self.variant.value
        return d


@dataclass(frozen=True)
class Event:
    step: int
    kind: str  # action name or "PENALTY"
    detail: object  # move params, or penalized edges
    delta: float
    current: float
    best: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "kind": self.kind,
                "detail": self.detail,
                "delta_true": self.delta,
                "current": self.current,
                "best": self.best,
            }
        )


@dataclass
class SearchResult:
    best_solution: Solution
    best_cost: float
    cost_trace: list[tuple[int, float, float]]
    events: list[Event]
    wall_time: float
    steps_executed: int
    penalty_events: int = 0
    penalties: list = field(default_factory=list)

    @property
    def best_cost_normalized(self) -> float:
        return self.best_solution.cost


def detect_local_min(stall_count: int, I: int) -> bool:
    return stall_count >= I


class Trainer:
    """Collects per-phase trajectories and applies REINFORCE updates.

    The baseline is an exponential moving average of past per-phase mean
    rewards, so phases that improve more than usual reinforce their actions.
    """

    def __init__(self, policy: Policy, reward_variant=RewardVariant.ADVANTAGE):
        self.policy = policy
        self.reward_variant = RewardVariant(reward_variant)
        self.baseline: float | None = None
        self.samples: list[Sample] = []
        self.updates = 0

    def record(self, sample: Sample):
        self.samples.append(sample)

    def end_phase(self, first_cost: float, final_cost: float):
        traj, self.samples = self.samples, []
        if not traj:
            return
        if self.reward_variant is RewardVariant.ADVANTAGE:
            r = reward_advantage(first_cost, final_cost)
            for s in traj:
                s.reward = r
        mean_r = float(np.mean([s.reward for s in traj]))
        b = mean_r if self.baseline is None else self.baseline
        reinforce_update(self.policy, traj, b)
        self.updates += 1
        if self.baseline is None:
            self.baseline = mean_r
        else:
            self.baseline = BASELINE_DECAY * self.baseline + (1 - BASELINE_DECAY) * mean_r


def solve(
    inst: RoutingInstance,
    config: SearchConfig | None = None,
    policy: Policy | None = None,
    rng=None,
    *,
    trainer: Trainer | None = None,
    trace=None,
) -> SearchResult:
    """Run one guided search.

    Without a policy actions are drawn uniformly from the variant's catalog.
    Instances outside the unit square are normalized first; ``best_cost`` is
    reported in raw units.
    ``trace`` may be a writable text stream that receives one JSON line per
    event.
    """
    cfg = config or SearchConfig()
    rng = as_rng(cfg.seed if rng is None else rng)
    inst = normalize(inst)  # lambda is calibrated for the unit square
    t0 = time.perf_counter()
    deadline = None if cfg.time_limit is None else t0 + cfg.time_limit

    mask = catalog_mask(cfg.variant)
    allowed = np.flatnonzero(mask)
    use_penalty = cfg.variant is not Variant.NO_PENALTY
    if trainer is not None and policy is None:
        policy = trainer.policy
    if policy is not None:
        if policy.n_actions != len(CATALOG):
            raise InvalidArgumentError(f"policy has {policy.n_actions} actions, catalog has {len(CATALOG)}")
        if policy.input_dim != node_dim(inst.kind):
            raise InvalidArgumentError(f"policy input_dim {policy.input_dim} does not fit {inst.kind.value}")

    k = cfg.candidate_k or default_k(inst.n)
    k = min(k, inst.n - 1)
    ps = PenaltyState(inst.n, cfg.lam)
    ctx = EvalContext(inst, ps, build_candidate_lists(inst, k))
    sol = initial_solution(inst, rng)
    history = History(policy.history_len if policy is not None else cfg.history_len)

    best = sol.copy()
    best_cost = sol.cost
    trace_every = cfg.trace_every or max(1, cfg.max_steps // 200)
    cost_trace = [(0, sol.cost, best_cost)]
    events: list[Event] = []

    def emit(ev: Event):
        events.append(ev)
        if trace is not None:
            trace.write(ev.to_json() + "\n")

    stall = 0
    phase_first = sol.cost
    phases_since_best = 0
    best_at_phase_start = best_cost
    n_pen = 0
    step = 0
    for step in range(1, cfg.max_steps + 1):
        if deadline is not None and time.perf_counter() > deadline:
            step -= 1
            break
        if policy is not None:
            state = extract_features(inst, sol, history, len(CATALOG))
            logp = policy.log_probs(state, mask)
            probs = np.exp(logp)
            a = sample_action(probs, cfg.epsilon, rng, mask)
        else:
            a = int(allowed[rng.integers(len(allowed))])
        action = CATALOG[a]
        prev = sol.cost
        move = OPERATORS[action.op](sol, ctx, action.depth)
        if move is not None:
            apply_move(sol, move)
        improved = sol.cost < prev - IMPROVE_TOL
        history.push(a, 1 if improved else -1)
        if trainer is not None:
            trainer.record(Sample(state, a, reward_binary(prev, sol.cost), float(logp[a]), mask))
        if sol.cost < best_cost - IMPROVE_TOL:
            best = sol.copy()
            best_cost = sol.cost
            cost_trace.append((step, sol.cost, best_cost))
        elif step % trace_every == 0:
            cost_trace.append((step, sol.cost, best_cost))
        if move is not None:
            emit(Event(step, action.name, list(move.params), move.delta_true, sol.cost, best_cost))
        stall = 0 if improved else stall + 1

        if detect_local_min(stall, cfg.stall_threshold):
            if trainer is not None:
                trainer.end_phase(phase_first, sol.cost)
            if use_penalty:
                feats = penalize(sol, ps)
                n_pen += 1
                emit(Event(step, "PENALTY", [list(f.edge) for f in feats], 0.0, sol.cost, best_cost))
            stall = 0
            phase_first = sol.cost
            phases_since_best = 0 if best_cost < best_at_phase_start - IMPROVE_TOL else phases_since_best + 1
            best_at_phase_start = best_cost
            if cfg.patience is not None and phases_since_best >= cfg.patience:
                break

    if trainer is not None:
        trainer.end_phase(phase_first, sol.cost)
    if cost_trace[-1][0] != step:
        cost_trace.append((step, sol.cost, best_cost))

    violations = validate(inst, best)
    if violations:
        raise ValidationError("search produced an infeasible solution", violations)
    return SearchResult(
        best_solution=best,
        best_cost=reported_cost(inst, best),
        cost_trace=cost_trace,
        events=events,
        wall_time=time.perf_counter() - t0,
        steps_executed=step,
        penalty_events=n_pen,
        penalties=ps.snapshot(),
    )


def run_variant(variant, inst, config: SearchConfig | None = None, policy=None, rng=None, **kw) -> SearchResult:
    try:
        variant = Variant(variant)
    except ValueError:
        raise InvalidArgumentError(f"unknown variant {variant!r}") from None
    return solve(inst, replace(config or SearchConfig(), variant=variant), policy, rng, **kw)


def random_instance(kind, n: int, seed: int) -> RoutingInstance:
    if Kind(kind) is Kind.TSP:
        return generate_uniform_tsp(n, seed)
    return generate_cvrp(GenSpec(n, seed))


def train(
    kind,
    n: int,
    config: SearchConfig | None = None,
    episodes: int = 50,
    rng=None,
    *,
    policy: Policy | None = None,
    log=None,
) -> Policy:
    """Train a policy on freshly sampled random instances.

    ``log`` (a list) receives one ``(episode, best_cost, updates)`` row per
    episode.
    """
    if episodes <= 0:
        raise InvalidArgumentError("episodes must be positive")
    cfg = config or SearchConfig()
    kind = Kind(kind)
    seed = cfg.seed if rng is None else int(as_rng(rng).integers(2**63))
    if policy is None:
        policy = Policy.create(node_dim(kind), len(CATALOG), seed=child_seed(seed, 0))
    trainer = Trainer(policy, cfg.reward_variant)
    for ep in range(episodes):
        inst = random_instance(kind, n, child_seed(seed, 1, ep))
        res = solve(inst, cfg, rng=make_rng(seed, 2, ep), trainer=trainer)
        if log is not None:
            log.append((ep, res.best_cost, trainer.updates))
    return policy
