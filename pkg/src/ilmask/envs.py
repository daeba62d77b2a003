"""Finite test MDPs, their exact experts, and the rollout harness.

Both built-in environments are tabular with deterministic transitions (the
start state may be random). After the goal is reached the episode sits in an
absorbing terminal state that pays nothing and always records the no-op
action, so every rollout has exactly ``horizon`` frames.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ConfigError, ContractError, DemoSet, ReturnStats, Step, Trajectory, derive


@dataclass(eq=False)
class TabularEnv:
    name: str
    next_state: np.ndarray  # (S, A) int
    reward: np.ndarray  # (S, A) float, reward for taking a in s
    terminal: np.ndarray  # (S,) bool
    start_probs: np.ndarray  # (S,)
    horizon: int
    noop: int
    coords: np.ndarray  # (S, d) used by nearest-state fallbacks
    params: dict = field(default_factory=dict)
    deterministic: bool = True
    _state: int = field(default=-1, repr=False)
    _t: int = field(default=0, repr=False)

    def __post_init__(self):
        self.next_state = np.ascontiguousarray(self.next_state, dtype=np.int64)
        self.reward = np.ascontiguousarray(self.reward, dtype=np.float64)
        self.terminal = np.ascontiguousarray(self.terminal, dtype=np.bool_)
        self.start_probs = np.asarray(self.start_probs, dtype=np.float64)
        self.start_cum = np.cumsum(self.start_probs)
        if not np.isfinite(self.reward).all():
            raise ConfigError(f"{self.name}: rewards must be finite", key="env_params")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0", key="T")

    @property
    def n_states(self):
        return self.next_state.shape[0]

    @property
    def n_actions(self):
        return self.next_state.shape[1]

    # stepping interface; draws from the same uniform stream as the batch kernel
    def reset(self, seed=None, rng=None):
        self._rng = rng if rng is not None else np.random.default_rng(seed)
        u = self._rng.random()
        self._state = int(min(np.searchsorted(self.start_cum, u, side="right"), self.n_states - 1))
        self._t = 0
        return self._state

    def step(self, action):
        if self._state < 0:
            raise ContractError("call reset() before step()")
        if not (isinstance(action, (int, np.integer)) and 0 <= action < self.n_actions):
            raise ContractError(f"invalid action {action!r} for {self.name} (A={self.n_actions})")
        s = self._state
        self._t += 1
        if self.terminal[s]:
            return s, 0.0, True
        r = float(self.reward[s, action])
        self._state = int(self.next_state[s, action])
        return self._state, r, bool(self.terminal[self._state])


# -- built-in environments --------------------------------------------------

KEYDOOR_DEFAULTS = dict(size=5, key=(1, 3), door=(4, 4), step_penalty=-1.0,
                        door_reward=10.0, start=(0, 0))
CORRIDOR_DEFAULTS = dict(length=12, distractor=(4, 8), step_penalty=-1.0,
                         goal_reward=20.0, start=0)

# keydoor actions: up, down, left, right, no-op
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


def _keydoor(horizon, size, key, door, step_penalty, door_reward, start):
    key, door = tuple(key), tuple(door)
    for cell in (key, door):
        if not all(0 <= x < size for x in cell):
            raise ConfigError(f"cell {cell} outside {size}x{size} grid", key="env_params")
    if key == door:
        raise ConfigError("key and door must differ", key="env_params")
    S = 2 * size * size + 1
    term = S - 1
    nxt = np.empty((S, 5), dtype=np.int64)
    rew = np.full((S, 5), float(step_penalty))
    coords = np.empty((S, 3))

    def idx(r, c, k):
        return 2 * (r * size + c) + k

    for r in range(size):
        for c in range(size):
            for k in (0, 1):
                s = idx(r, c, k)
                coords[s] = (r, c, 100 * k)
                for a, (dr, dc) in enumerate(_MOVES):
                    nr = min(max(r + dr, 0), size - 1)
                    nc = min(max(c + dc, 0), size - 1)
                    nk = 1 if (k or (nr, nc) == key) else 0
                    if nk and (nr, nc) == door and a != 4:
                        nxt[s, a] = term
                        rew[s, a] += door_reward
                    else:
                        nxt[s, a] = idx(nr, nc, nk)
    nxt[term] = term
    rew[term] = 0.0
    coords[term] = (-1000, -1000, -1000)
    terminal = np.zeros(S, dtype=bool)
    terminal[term] = True

    start_probs = np.zeros(S)
    if start == "random":
        cells = [(r, c) for r in range(size) for c in range(size) if (r, c) not in (key, door)]
        for r, c in cells:
            start_probs[idx(r, c, 0)] = 1.0 / len(cells)
    else:
        start = tuple(start)
        if not all(0 <= x < size for x in start):
            raise ConfigError(f"start {start} outside grid", key="env_params")
        start_probs[idx(*start, 1 if start == key else 0)] = 1.0
    return nxt, rew, terminal, start_probs, coords


def _corridor(horizon, length, distractor, step_penalty, goal_reward, start):
    lo, hi = distractor
    if length < 2 or not 0 <= lo <= hi <= length - 1:
        raise ConfigError(f"bad corridor geometry length={length} distractor={distractor}",
                          key="env_params")
    # positions 0..length-2 are live, entering length-1 ends the episode
    S = length
    term = length - 1
    nxt = np.empty((S, 3), dtype=np.int64)
    rew = np.full((S, 3), float(step_penalty))
    for x in range(length - 1):
        left = x + 1 if lo <= x < hi else max(x - 1, 0)
        for a, y in enumerate((left, x + 1, x)):
            nxt[x, a] = y
            if y == term:
                rew[x, a] += goal_reward
    nxt[term] = term
    rew[term] = 0.0
    terminal = np.zeros(S, dtype=bool)
    terminal[term] = True
    coords = np.arange(S, dtype=np.float64)[:, None]
    coords[term] = -1000.0

    start_probs = np.zeros(S)
    if start == "random":
        cells = list(range(0, max(lo, 1)))
    elif isinstance(start, (list, tuple)):
        cells = list(start)
    else:
        cells = [int(start)]
    if not all(0 <= x < term for x in cells):
        raise ConfigError(f"start cells {cells} outside corridor", key="env_params")
    start_probs[cells] = 1.0 / len(cells)
    return nxt, rew, terminal, start_probs, coords


_BUILDERS = {
    "keydoor": (_keydoor, KEYDOOR_DEFAULTS, 4),
    "corridor": (_corridor, CORRIDOR_DEFAULTS, 2),
}


def make_env(name: str, params: dict | None = None, horizon: int | None = None) -> TabularEnv:
    """Build a built-in environment; ``params`` override the defaults."""
    if name not in _BUILDERS:
        raise ConfigError(f"unknown env {name!r}; choose from {sorted(_BUILDERS)}", key="env")
    build, defaults, noop = _BUILDERS[name]
    params = dict(params or {})
    if horizon is None:
        horizon = params.pop("horizon", 20 if name == "keydoor" else 15)
    else:
        params.pop("horizon", None)
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {name} params {sorted(unknown)}", key="env_params")
    full = {**defaults, **params}
    nxt, rew, terminal, start_probs, coords = build(horizon, **full)
    return TabularEnv(name, nxt, rew, terminal, start_probs, int(horizon), noop, coords,
                      params={**full, "horizon": int(horizon)})


def has_key(env: TabularEnv, states):
    """Keydoor only: whether each state id carries the key (terminal counts as yes)."""
    states = np.asarray(states)
    return np.where(env.terminal[states], True, states % 2 == 1)


def key_pickup_frames(env: TabularEnv, demos: DemoSet) -> np.ndarray:
    """(H, T) flags for the frames whose action picks up the key."""
    if env.name != "keydoor":
        raise ContractError("key pickup is defined for keydoor only")
    nxt = env.next_state[demos.states, demos.actions]
    return ~has_key(env, demos.states) & has_key(env, nxt) & ~env.terminal[nxt]


# -- policies ---------------------------------------------------------------

class Policy:
    """Stationary policy over a finite state space, as an (S, A) table."""

    def __init__(self, probs, info=None):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2 or (probs < 0).any():
            raise ContractError("policy table must be a non-negative (S, A) array")
        probs = probs / probs.sum(axis=1, keepdims=True)
        self.probs = probs
        self.cum = np.ascontiguousarray(np.cumsum(probs, axis=1))
        self.info = dict(info or {})

    @classmethod
    def deterministic(cls, actions, n_actions, info=None):
        actions = np.asarray(actions, dtype=np.int64)
        if actions.size and (actions.min() < 0 or actions.max() >= n_actions):
            raise ContractError("deterministic policy action out of range")
        table = np.zeros((actions.size, n_actions))
        table[np.arange(actions.size), actions] = 1.0
        return cls(table, info)

    @classmethod
    def uniform(cls, n_states, n_actions, info=None):
        return cls(np.ones((n_states, n_actions)), info)

    @property
    def n_actions(self):
        return self.probs.shape[1]

    def act(self, state, rng):
        u = rng.random()
        row = self.cum[state]
        return int(min(np.searchsorted(row, u, side="right"), len(row) - 1))

    def action_table(self):
        """Most likely action per state, lowest index on ties."""
        return self.probs.argmax(axis=1)


def expert_policy(env: TabularEnv) -> Policy:
    """Optimal stationary policy by undiscounted value iteration.

    Ties between optimal actions go to the lowest action index.
    """
    V, Q = kernels.value_iteration(env.next_state, env.reward, env.n_states + 1)
    actions = Q.argmax(axis=1)
    actions[env.terminal] = env.noop
    return Policy.deterministic(actions, env.n_actions, info={"V": V})


# -- rollouts ---------------------------------------------------------------

def _draws(seed, T):
    rng = np.random.default_rng(seed)
    return rng.random(), rng.random(T)


def simulate(env: TabularEnv, policy, seeds):
    """Roll out one episode per seed; returns (states, actions, rewards) as (J, T)."""
    seeds = list(seeds)
    T = env.horizon
    if isinstance(policy, Policy):
        if policy.probs.shape != (env.n_states, env.n_actions):
            raise ContractError(f"policy table {policy.probs.shape} does not fit {env.name} "
                                f"({env.n_states}, {env.n_actions})")
        u_start = np.empty(len(seeds))
        u_act = np.empty((len(seeds), T))
        for j, sd in enumerate(seeds):
            u_start[j], u_act[j] = _draws(sd, T)
        return kernels.rollout_batch(env.next_state, env.reward, env.terminal, policy.cum,
                                     env.start_cum, env.noop, u_start, u_act)
    return _simulate_python(env, policy, seeds)


def _simulate_python(env, policy, seeds):
    # opaque policies: step through the env one action at a time
    J, T = len(seeds), env.horizon
    states = np.empty((J, T), dtype=np.int64)
    actions = np.empty((J, T), dtype=np.int64)
    rewards = np.zeros((J, T))
    for j, sd in enumerate(seeds):
        rng = np.random.default_rng(sd)
        s = env.reset(rng=rng)
        done = bool(env.terminal[s])
        for t in range(T):
            states[j, t] = s
            if done:
                actions[j, t] = env.noop
                env.step(env.noop)
                continue
            a = policy.act(s, rng)
            if not (isinstance(a, (int, np.integer)) and 0 <= a < env.n_actions):
                raise ContractError(f"policy emitted invalid action {a!r}")
            actions[j, t] = a
            s, rewards[j, t], done = env.step(int(a))
    return states, actions, rewards


def rollout(env: TabularEnv, policy, seed: int) -> tuple[Trajectory, float]:
    states, actions, rewards = simulate(env, policy, [seed])
    traj = Trajectory(tuple(Step(int(s), int(a), float(r))
                            for s, a, r in zip(states[0], actions[0], rewards[0])))
    return traj, float(rewards.sum(axis=1)[0])


def evaluate(env: TabularEnv, policy, J: int, seed: int) -> ReturnStats:
    """Mean/std of ``J`` rollout returns; rollout j uses ``derive(seed, j)``."""
    if J < 1:
        raise ConfigError("n_rollouts must be >= 1", key="n_rollouts")
    _, _, rewards = simulate(env, policy, [derive(seed, j) for j in range(J)])
    return ReturnStats.from_returns(rewards.sum(axis=1))


def gen_demos(env: TabularEnv, H: int, seed: int) -> DemoSet:
    if H < 1:
        raise ConfigError("H must be >= 1", key="H")
    states, actions, rewards = simulate(env, expert_policy(env), [derive(seed, h) for h in range(H)])
    return DemoSet(env.name, states, actions, rewards, env.n_actions)
