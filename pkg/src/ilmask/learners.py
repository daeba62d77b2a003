"""Black-box imitation learners: (masked) demonstrations in, Policy out.

Every learner is a pure function of ``(spec, data, seed, env)``. The env is
passed for its state/action counts, for the nearest-state fallback, and for the
adversarial learner's own rollouts; environment rewards are never used for
training.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ConfigError, ContractError, derive
from .envs import Policy, TabularEnv, evaluate, simulate

DEFAULTS = {
    "bc_tabular": {"fallback": "uniform"},
    "bc_linear": {"epochs": 200, "lr": 50.0, "init_scale": 0.01},
    "adv_il": {"rounds": 8, "disc_steps": 100, "disc_lr": 1.0, "disc_l2": 0.01,
               "gamma": 0.95, "alpha": 0.1, "n_internal": 20, "init_scale": 0.01},
    "stub_constant": {"R": None},
}


@dataclass(frozen=True)
class LearnerSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DEFAULTS:
            raise ConfigError(f"unknown learner {self.name!r}; choose from {sorted(DEFAULTS)}",
                              key="learner")
        unknown = set(self.params) - set(DEFAULTS[self.name])
        if unknown:
            raise ConfigError(f"unknown {self.name} params {sorted(unknown)}", key="learner_params")
        object.__setattr__(self, "params", {**DEFAULTS[self.name], **self.params})
        fb = self.params.get("fallback")
        if fb is not None and fb not in ("uniform", "nearest"):
            raise ConfigError(f"fallback must be 'uniform' or 'nearest', got {fb!r}",
                              key="learner_params.fallback")


def make_stub_constant(R: float) -> LearnerSpec:
    """Learner that ignores its data and returns a fixed policy worth ``R``."""
    return LearnerSpec("stub_constant", {"R": float(R)})


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """(state, action) pairs that survived masking, with their provenance."""

    states: np.ndarray
    actions: np.ndarray
    traj_index: np.ndarray
    frame_index: np.ndarray

    def __len__(self):
        return int(self.states.size)

    @property
    def pairs(self):
        return list(zip(self.states.tolist(), self.actions.tolist()))

    @classmethod
    def from_pairs(cls, pairs):
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        n = arr.shape[0]
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), np.zeros(n, np.int64), np.arange(n))


def _counts(data: TrainingSet, env: TabularEnv):
    S, A = env.n_states, env.n_actions
    if len(data) and (data.states.max() >= S or data.actions.max() >= A):
        raise ContractError(f"training pairs do not fit {env.name} ({S} states, {A} actions)")
    counts = np.zeros((S, A))
    np.add.at(counts, (data.states, data.actions), 1.0)
    return counts


def _fill_unseen(probs, seen, env, mode):
    if mode == "uniform" or not seen.any():
        probs[~seen] = 1.0 / probs.shape[1]
        return probs
    seen_idx = np.flatnonzero(seen)
    for s in np.flatnonzero(~seen):
        d = np.abs(env.coords[seen_idx] - env.coords[s]).sum(axis=1)
        probs[s] = probs[seen_idx[d.argmin()]]
    return probs


def _bc_tabular(p, data, seed, env):
    counts = _counts(data, env)
    seen = counts.sum(axis=1) > 0
    probs = np.zeros_like(counts)
    probs[np.arange(len(counts)), counts.argmax(axis=1)] = 1.0
    return Policy(_fill_unseen(probs, seen, env, p["fallback"]))


def _bc_linear(p, data, seed, env):
    counts = _counts(data, env)
    rng = np.random.default_rng(seed)
    W0 = rng.normal(0.0, p["init_scale"], counts.shape)
    W = kernels.softmax_gd(counts, W0, float(p["lr"]), int(p["epochs"]))
    return Policy.deterministic(W.argmax(axis=1), env.n_actions, info={"weights": W})


def _softmax_policy(Q, alpha, env):
    Z = (Q - Q.max(axis=1, keepdims=True)) / alpha
    probs = np.exp(Z)
    probs[env.terminal] = 0.0
    probs[env.terminal, env.noop] = 1.0
    return Policy(probs)


def _occupancy(counts, live, scale):
    occ = np.where(live[:, None], counts, 0.0)
    total = occ.sum()
    return occ * (scale / total) if total > 0 else occ


def _adv_il(p, data, seed, env):
    # tabular GAIL: logistic discriminator on (s, a) occupancies, then soft
    # value iteration on log D gives the next generator. The generator only
    # knows transitions it has taken in its own rollouts (untried ones are
    # treated as staying put), so expert data has to guide it to the goal.
    # Padded frames in the absorbing state are not behaviour: the terminal
    # state is left out of the discriminator and earns log D's ceiling, 0.
    counts = _counts(data, env)
    live = ~env.terminal
    scale = float(max(env.horizon, 1))
    expert_occ = _occupancy(counts, live, scale)
    rng = np.random.default_rng(seed)
    w = np.where(live[:, None], rng.normal(0.0, p["init_scale"], counts.shape), 0.0)
    model = np.repeat(np.arange(env.n_states)[:, None], env.n_actions, axis=1)
    model[env.terminal] = env.next_state[env.terminal]
    policy = Policy.uniform(env.n_states, env.n_actions)
    round_returns = []
    Q = np.zeros_like(counts)
    n = int(p["n_internal"])
    for k in range(int(p["rounds"])):
        states, actions, _ = simulate(env, policy, [derive(seed, 1, k, j) for j in range(n)])
        model[states[:, :-1], actions[:, :-1]] = states[:, 1:]
        gen_counts = np.zeros_like(counts)
        np.add.at(gen_counts, (states.ravel(), actions.ravel()), 1.0)
        gen_occ = _occupancy(gen_counts, live, scale)
        for _ in range(int(p["disc_steps"])):
            D = 1.0 / (1.0 + np.exp(-w))
            grad = -expert_occ * (1.0 - D) + gen_occ * D + p["disc_l2"] * w
            w -= p["disc_lr"] * np.where(live[:, None], grad, 0.0)
        D = 1.0 / (1.0 + np.exp(-w))
        reward = np.log(np.clip(D, 1e-6, 1.0))
        reward[env.terminal] = 0.0
        Q = kernels.soft_value_iteration(model, reward, env.terminal, env.noop,
                                          float(p["gamma"]), float(p["alpha"]), 2000, 1e-9)
        policy = _softmax_policy(Q, float(p["alpha"]), env)
        # true-reward curve is logged for plotting only, never fed back
        round_returns.append(evaluate(env, _greedy(Q, env), 1, derive(seed, 2, k)).mean)
    final = _greedy(Q, env)
    final.info["round_returns"] = round_returns
    return final


def _greedy(Q, env):
    actions = Q.argmax(axis=1)
    actions[env.terminal] = env.noop
    return Policy.deterministic(actions, env.n_actions)


def _stub_constant(p, data, seed, env):
    R = p["R"]
    if R is None:
        raise ConfigError("stub_constant needs learner_params.R", key="learner_params.R")
    for a in range(env.n_actions):
        pol = Policy.deterministic(np.full(env.n_states, a), env.n_actions)
        if evaluate(env, pol, 1, 0).mean == R:
            pol.info["constant_action"] = a
            return pol
    raise ConfigError(f"no constant-action policy in {env.name} returns {R}",
                      key="learner_params.R")


_TRAINERS = {
    "bc_tabular": _bc_tabular,
    "bc_linear": _bc_linear,
    "adv_il": _adv_il,
    "stub_constant": _stub_constant,
}


def train(spec: LearnerSpec, data: TrainingSet, seed: int, env: TabularEnv) -> Policy:
    """Fit ``spec`` on ``data``; an empty set yields the uniform fallback policy.

    The returned policy's ``info["empty_trainset"]`` tells the two cases apart.
    """
    if len(data) == 0 and spec.name != "stub_constant":
        policy = Policy.uniform(env.n_states, env.n_actions)
    else:
        policy = _TRAINERS[spec.name](spec.params, data, seed, env)
    policy.info["empty_trainset"] = len(data) == 0
    policy.info["learner"] = spec.name
    return policy
