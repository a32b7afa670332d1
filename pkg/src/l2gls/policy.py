"""Operator-selection policy: state features, attention network, REINFORCE.

The network is small enough to run on a CPU in plain numpy, so forward and
backward passes are written out by hand.

Pipeline: per-node linear embedding -> multi-head self-attention with a
residual connection -> mean over nodes -> concat with the flattened action
history -> FC + ReLU -> FC -> softmax over the action catalog.
"""
from __future__ import annotations

import io
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingDivergedError
from .instance import Kind, RoutingInstance
from .rng import as_rng
from .solution import RouteSet, Solution

TSP_NODE_DIM = 9
CVRP_NODE_DIM = 11

EMBED_DIM = 64
N_HEADS = 4
HIDDEN_DIM = 128
HISTORY_LEN = 8

LEARNING_RATE = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

PARAM_ORDER = ("W_emb", "b_emb", "Wq", "Wk", "Wv", "Wo", "W1", "b1", "W2", "b2")
CHECKPOINT_MAGIC = b"L2GLSPOL"
CHECKPOINT_VERSION = 1


def node_dim(kind: Kind) -> int:
    return TSP_NODE_DIM if Kind(kind) is Kind.TSP else CVRP_NODE_DIM


# -- state features ---------------------------------------------------------------


@dataclass
class StateFeatures:
    nodes: np.ndarray  # (n, 9) for TSP, (n, 11) for CVRP
    history: np.ndarray  # (H, n_actions + 1): one-hot action, then effect


class History:
    """Last ``H`` (action, effect) pairs, most recent first when encoded."""

    def __init__(self, length: int = HISTORY_LEN):
        self.length = length
        self.items: deque[tuple[int, int]] = deque(maxlen=length)

    def push(self, action: int, effect: int):
        if effect not in (1, -1):
            raise ValueError("effect must be +1 or -1")
        self.items.append((int(action), int(effect)))

    def encode(self, n_actions: int) -> np.ndarray:
        out = np.zeros((self.length, n_actions + 1))
        for h, (a, e) in enumerate(reversed(self.items)):
            out[h, a] = 1.0
            out[h, n_actions] = e
        return out


def extract_features(inst: RoutingInstance, sol: Solution, history=None, n_actions: int | None = None) -> StateFeatures:
    n = inst.n
    xy = inst.coords
    d = inst.dist
    nodes = np.arange(n)
    pred = sol.phys[sol.pred[nodes]]
    succ = sol.phys[sol.succ[nodes]]
    if isinstance(sol, RouteSet):
        pred[0] = succ[0] = 0
    rows = np.column_stack(
        [xy, xy[pred], xy[succ], d[pred, nodes], d[nodes, succ], d[pred, succ]]
    )
    if isinstance(sol, RouteSet):
        cap = float(inst.capacity)
        free = np.full(n, cap)
        free[1:] = cap - sol.load[sol.rid[1:n]]
        rows = np.column_stack([rows, inst.demands / cap, free / cap])
    if history is None:
        hist = np.zeros((HISTORY_LEN, (n_actions or 0) + 1))
    elif isinstance(history, History):
        if n_actions is None:
            raise ValueError("n_actions is required to encode a History")
        hist = history.encode(n_actions)
    else:
        hist = np.asarray(history, dtype=float)
    return StateFeatures(rows, hist)


# -- network ----------------------------------------------------------------------


def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _log_softmax(x):
    z = x - x.max()
    return z - np.log(np.exp(z).sum())


@dataclass
class Policy:
    input_dim: int
    n_actions: int
    embed_dim: int = EMBED_DIM
    n_heads: int = N_HEADS
    hidden_dim: int = HIDDEN_DIM
    history_len: int = HISTORY_LEN
    params: dict = field(default_factory=dict)
    lr: float = LEARNING_RATE
    m: dict = field(default_factory=dict, repr=False)
    v: dict = field(default_factory=dict, repr=False)
    step: int = 0

    @classmethod
    def create(cls, input_dim, n_actions, seed=0, *, zero_final=True, **dims) -> "Policy":
        pol = cls(input_dim, n_actions, **dims)
        if pol.embed_dim % pol.n_heads:
            raise ShapeError("embed_dim must be divisible by n_heads")
        rng = as_rng(seed)
        for name, shape in pol.shapes().items():
            if name.startswith("b"):
                pol.params[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                pol.params[name] = rng.uniform(-bound, bound, size=shape)
        if zero_final:
            pol.params["W2"][:] = 0.0
            pol.params["b2"][:] = 0.0
        pol.reset_optimizer()
        return pol

    @property
    def concat_dim(self) -> int:
        return self.embed_dim + self.history_len * (self.n_actions + 1)

    def shapes(self) -> dict:
        D, F = self.embed_dim, self.hidden_dim
        return {
            "W_emb": (self.input_dim, D),
            "b_emb": (D,),
            "Wq": (D, D),
            "Wk": (D, D),
            "Wv": (D, D),
            "Wo": (D, D),
            "W1": (self.concat_dim, F),
            "b1": (F,),
            "W2": (F, self.n_actions),
            "b2": (self.n_actions,),
        }

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())

    def reset_optimizer(self):
        self.m = {k: np.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p) for k, p in self.params.items()}
        self.step = 0

    def copy(self) -> "Policy":
        new = Policy(
            self.input_dim, self.n_actions, self.embed_dim, self.n_heads, self.hidden_dim, self.history_len
        )
        new.params = {k: p.copy() for k, p in self.params.items()}
        new.m = {k: p.copy() for k, p in self.m.items()}
        new.v = {k: p.copy() for k, p in self.v.items()}
        new.lr, new.step = self.lr, self.step
        return new

    # -- forward / backward --------------------------------------------------

    def _check(self, s: StateFeatures):
        if s.nodes.ndim != 2 or s.nodes.shape[1] != self.input_dim:
            raise ShapeError(f"node features {s.nodes.shape} do not match input_dim {self.input_dim}")
        if s.history.shape != (self.history_len, self.n_actions + 1):
            raise ShapeError(
                f"history {s.history.shape} does not match ({self.history_len}, {self.n_actions + 1})"
            )

    def encode(self, s: StateFeatures, cache: dict | None = None) -> np.ndarray:
        """Pooled node encoding (before the history is appended)."""
        P = self.params
        X = s.nodes
        n, D, h = X.shape[0], self.embed_dim, self.n_heads
        dh = D // h
        E = X @ P["W_emb"] + P["b_emb"]
        Q = (E @ P["Wq"]).reshape(n, h, dh).transpose(1, 0, 2)
        K = (E @ P["Wk"]).reshape(n, h, dh).transpose(1, 0, 2)
        V = (E @ P["Wv"]).reshape(n, h, dh).transpose(1, 0, 2)
        A = _softmax(Q @ K.transpose(0, 2, 1) / np.sqrt(dh))
        O = (A @ V).transpose(1, 0, 2).reshape(n, D)
        Z = E + O @ P["Wo"]
        g = Z.mean(axis=0)
        if cache is not None:
            cache.update(X=X, E=E, Q=Q, K=K, V=V, A=A, O=O)
        return g

    def _logits(self, s, cache=None):
        P = self.params
        g = self.encode(s, cache)
        z = np.concatenate([g, s.history.reshape(-1)])
        pre = z @ P["W1"] + P["b1"]
        u = np.maximum(pre, 0.0)
        logits = u @ P["W2"] + P["b2"]
        if cache is not None:
            cache.update(z=z, pre=pre, u=u)
        return logits

    def forward(self, s: StateFeatures, mask=None) -> np.ndarray:
        self._check(s)
        return self._probs(self._logits(s), mask)

    def log_probs(self, s: StateFeatures, mask=None) -> np.ndarray:
        """Log-probabilities, finite for allowed actions even when a probability underflows."""
        self._check(s)
        logits = self._logits(s)
        if mask is not None:
            logits = np.where(mask, logits, -np.inf)
        return _log_softmax(logits)

    @staticmethod
    def _probs(logits, mask):
        if mask is not None:
            logits = np.where(mask, logits, -np.inf)
        return _softmax(logits)

    def grad_log_prob(self, s: StateFeatures, action: int, mask=None) -> tuple[float, dict]:
        """``log P(action | s)`` and its gradient with respect to every parameter."""
        self._check(s)
        P = self.params
        c: dict = {}
        logits = self._logits(s, c)
        if mask is not None:
            logits = np.where(mask, logits, -np.inf)
        probs = _softmax(logits)
        logp = float(_log_softmax(logits)[action])
        n, D, h = c["X"].shape[0], self.embed_dim, self.n_heads
        dh = D // h

        dlogits = -probs
        dlogits[action] += 1.0
        g = {"W2": np.outer(c["u"], dlogits), "b2": dlogits}
        du = P["W2"] @ dlogits
        dpre = du * (c["pre"] > 0)
        g["W1"] = np.outer(c["z"], dpre)
        g["b1"] = dpre
        dz = P["W1"] @ dpre
        dZ = np.broadcast_to(dz[:D] / n, (n, D))
        g["Wo"] = c["O"].T @ dZ
        dO = (dZ @ P["Wo"].T).reshape(n, h, dh).transpose(1, 0, 2)
        A, Q, K, V = c["A"], c["Q"], c["K"], c["V"]
        dA = dO @ V.transpose(0, 2, 1)
        dV = A.transpose(0, 2, 1) @ dO
        dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
        dQ = dS @ K
        dK = dS.transpose(0, 2, 1) @ Q
        flat = lambda t: t.transpose(1, 0, 2).reshape(n, D)  # noqa: E731
        dQ, dK, dV = flat(dQ), flat(dK), flat(dV)
        E = c["E"]
        g["Wq"], g["Wk"], g["Wv"] = E.T @ dQ, E.T @ dK, E.T @ dV
        dE = dZ + dQ @ P["Wq"].T + dK @ P["Wk"].T + dV @ P["Wv"].T
        g["W_emb"] = c["X"].T @ dE
        g["b_emb"] = dE.sum(axis=0)
        return logp, g

    # -- optimisation ----------------------------------------------------------

    def ascend(self, grad: dict):
        """One Adam step in the direction of ``grad``."""
        b1, b2 = ADAM_BETAS
        self.step += 1
        t = self.step
        for k, p in self.params.items():
            gk = grad[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * gk
            self.v[k] = b2 * self.v[k] + (1 - b2) * gk * gk
            mhat = self.m[k] / (1 - b1**t)
            vhat = self.v[k] / (1 - b2**t)
            p += self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)

    # -- checkpoints -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(
            struct.pack(
                "<7I",
                CHECKPOINT_VERSION,
                self.embed_dim,
                self.n_heads,
                self.hidden_dim,
                self.history_len,
                self.n_actions,
                self.input_dim,
            )
        )
        for name in PARAM_ORDER:
            buf.write(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Policy":
        if data[:8] != CHECKPOINT_MAGIC:
            raise ValueError("not a policy checkpoint")
        version, D, heads, F1, H, n_actions, input_dim = struct.unpack_from("<7I", data, 8)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        pol = cls(input_dim, n_actions, D, heads, F1, H)
        off = 8 + 28
        for name in PARAM_ORDER:
            shape = pol.shapes()[name]
            count = int(np.prod(shape))
            pol.params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float).reshape(shape)
            off += 8 * count
        if off != len(data):
            raise ValueError("trailing bytes in checkpoint")
        pol.reset_optimizer()
        return pol

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Policy":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def forward(policy: Policy, s: StateFeatures, mask=None) -> np.ndarray:
    return policy.forward(s, mask)


def sample_action(dist, epsilon: float, rng, mask=None) -> int:
    """Epsilon-greedy draw: uniform over allowed actions with probability ``epsilon``."""
    rng = as_rng(rng)
    dist = np.asarray(dist, dtype=float)
    allowed = np.flatnonzero(mask) if mask is not None else np.arange(len(dist))
    if rng.random() < epsilon:
        return int(allowed[rng.integers(len(allowed))])
    cdf = np.cumsum(dist)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, len(dist) - 1)


# -- rewards and updates ----------------------------------------------------------


def reward_binary(prev_cost: float, new_cost: float) -> float:
    return 1.0 if new_cost < prev_cost - 1e-12 else -1.0


def reward_advantage(iteration_first_cost: float, iteration_final_cost: float) -> float:
    return iteration_first_cost - iteration_final_cost


@dataclass
class Sample:
    state: StateFeatures
    action: int
    reward: float
    log_prob: float
    mask: np.ndarray | None = None


def reinforce_update(policy: Policy, traj: list[Sample], baseline: float | None = None) -> dict:
    """Ascend ``mean((reward - baseline) * grad log P(action | state))``.

    ``baseline`` defaults to the mean reward of ``traj``.  Returns the
    gradient that was applied.
    """
    if not traj:
        raise ValueError("empty trajectory")
    rewards = np.array([s.reward for s in traj])
    b = float(rewards.mean()) if baseline is None else float(baseline)
    grad = {k: np.zeros_like(p) for k, p in policy.params.items()}
    adv = rewards - b
    for s, a in zip(traj, adv):
        if a == 0.0:
            continue
        _, g = policy.grad_log_prob(s.state, s.action, s.mask)
        for k in grad:
            grad[k] += a * g[k]
    for k in grad:
        grad[k] /= len(traj)
        if not np.all(np.isfinite(grad[k])):
            raise TrainingDivergedError(f"non-finite gradient in {k}")
    if any(np.any(gk) for gk in grad.values()):
        policy.ascend(grad)
    return grad
