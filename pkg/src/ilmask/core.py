"""Shared data model: demonstrations, snippet grids, masks, maps, configs."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, NamedTuple

import numpy as np


class ConfigError(ValueError):
    """Invalid run configuration. ``key`` names the offending setting."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ContractError(ValueError):
    """Arguments violate an operation's preconditions (shape mismatch, bad action)."""


class ParseError(ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ValidationError(ValueError):
    """A well-formed file whose content is inconsistent with its header."""


def derive(seed: int, *keys: int) -> int:
    """Stable 63-bit child seed of ``seed`` for the key path ``keys``."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def round_half_up(x) -> int:
    """Round to nearest integer, halves away from zero for x >= 0.

    Works on exact rationals so 2.5 -> 3 regardless of binary representation
    of inputs such as ``0.3 * 10``.
    """
    q = Fraction(x).limit_denominator(10**9) if isinstance(x, float) else Fraction(x)
    return int((q * 2 + 1) // 2)


# -- demonstrations ---------------------------------------------------------

class Step(NamedTuple):
    state: int
    action: int
    reward: float


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Step, ...]

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True, eq=False)
class DemoSet:
    """H fixed-length trajectories stored as (H, T) arrays.

    Rewards are kept for auditing; learners only ever see states and actions.
    """

    env_name: str
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    n_actions: int

    def __post_init__(self):
        states = np.ascontiguousarray(self.states, dtype=np.int64)
        actions = np.ascontiguousarray(self.actions, dtype=np.int64)
        rewards = np.ascontiguousarray(self.rewards, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ContractError(f"demo arrays must be (H>=1, T), got {states.shape}")
        if actions.shape != states.shape or rewards.shape != states.shape:
            raise ContractError("states, actions and rewards must share one (H, T) shape")
        if states.size and (states.min() < 0 or actions.min() < 0 or actions.max() >= self.n_actions):
            raise ContractError("state ids must be >= 0 and actions in [0, A)")
        for name, arr in (("states", states), ("actions", actions), ("rewards", rewards)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def H(self):
        return self.states.shape[0]

    @property
    def T(self):
        return self.states.shape[1]

    @property
    def A(self):
        return self.n_actions

    @property
    def trajectories(self):
        return [
            Trajectory(tuple(Step(int(s), int(a), float(r)) for s, a, r in zip(*rows)))
            for rows in zip(self.states, self.actions, self.rewards)
        ]

    @classmethod
    def from_trajectories(cls, env_name, trajectories, n_actions):
        lengths = {len(tr) for tr in trajectories}
        if len(lengths) != 1:
            raise ContractError(f"trajectories must share one length, got {sorted(lengths)}")
        arr = np.array([[tuple(st) for st in tr.steps] for tr in trajectories], dtype=np.float64)
        arr = arr.reshape(len(trajectories), lengths.pop(), 3)
        return cls(env_name, arr[..., 0].astype(np.int64), arr[..., 1].astype(np.int64),
                   arr[..., 2], n_actions)

    def __eq__(self, other):
        if not isinstance(other, DemoSet):
            return NotImplemented
        return (self.env_name == other.env_name and self.n_actions == other.n_actions
                and np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions)
                and self.rewards.tobytes() == other.rewards.tobytes()
                and self.rewards.shape == other.rewards.shape)

    __hash__ = None


# -- grids and masks --------------------------------------------------------

@dataclass(frozen=True)
class GridGeometry:
    H: int
    T: int
    G: int

    def __post_init__(self):
        if self.H < 1 or self.G < 1 or self.T < 1:
            raise ConfigError(f"grid needs H, T, G >= 1, got {self.H}x{self.T}/{self.G}", key="G")
        if self.T % self.G:
            raise ConfigError(f"G={self.G} does not divide T={self.T}", key="G")

    @property
    def frames_per_snippet(self):
        return self.T // self.G

    @property
    def n_cells(self):
        return self.H * self.G

    @property
    def shape(self):
        return (self.H, self.G)

    @classmethod
    def for_demos(cls, demos: DemoSet, G: int) -> "GridGeometry":
        return cls(demos.H, demos.T, G)


def snippet_frame_range(geom: GridGeometry, snippet_index: int) -> range:
    """Half-open frame range covered by one snippet column."""
    if not 0 <= snippet_index < geom.G:
        raise IndexError(f"snippet {snippet_index} outside [0, {geom.G})")
    f = geom.frames_per_snippet
    return range(snippet_index * f, (snippet_index + 1) * f)


@dataclass(frozen=True, eq=False)
class MaskGrid:
    """Binary H x G grid over snippets; 1 keeps a snippet, 0 removes it."""

    cells: np.ndarray
    keep_fraction: float

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ContractError(f"mask must be 2-D, got shape {cells.shape}")
        if not np.isin(cells, (0, 1)).all():
            raise ContractError("mask cells must be 0 or 1")
        cells = np.ascontiguousarray(cells, dtype=np.uint8)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ContractError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")

    @property
    def shape(self):
        return self.cells.shape

    def __eq__(self, other):
        if not isinstance(other, MaskGrid):
            return NotImplemented
        return np.array_equal(self.cells, other.cells) and self.keep_fraction == other.keep_fraction

    __hash__ = None


def cell_count(mask: MaskGrid) -> tuple[int, int]:
    kept = int(mask.cells.sum())
    return kept, mask.cells.size - kept


# -- results ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ImportanceMap:
    """Return-weighted mask sums and their normalisation by ``p * N``."""

    weighted_sums: np.ndarray
    n_masks: int
    keep_fraction: float
    normalized: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_sums(cls, weighted_sums, n_masks, keep_fraction, meta=None):
        ws = np.array(weighted_sums, dtype=np.float64)
        if n_masks < 1:
            raise ContractError("n_masks must be >= 1")
        return cls(ws, int(n_masks), float(keep_fraction), ws / (keep_fraction * n_masks),
                   dict(meta or {}))

    @classmethod
    def from_normalized(cls, normalized, meta=None):
        # maps read back from CSV carry no accumulator; treat as p = N = 1
        z = np.array(normalized, dtype=np.float64)
        return cls(z.copy(), 1, 1.0, z, dict(meta or {}))

    @property
    def shape(self):
        return self.normalized.shape


@dataclass(frozen=True)
class ReturnStats:
    per_rollout: tuple[float, ...]
    mean: float
    std: float

    @classmethod
    def from_returns(cls, returns):
        r = np.asarray(returns, dtype=np.float64)
        if r.size < 1:
            raise ConfigError("need at least one rollout", key="n_rollouts")
        return cls(tuple(float(x) for x in r), float(r.mean()), float(r.std()))

    @property
    def J(self):
        return len(self.per_rollout)


# -- configuration ----------------------------------------------------------

LEARNER_NAMES = ("bc_tabular", "bc_linear", "adv_il", "stub_constant")
ENV_NAMES = ("keydoor", "corridor")


@dataclass
class RunConfig:
    env_name: str = "keydoor"
    learner_name: str = "bc_tabular"
    H: int = 20
    T: int = 20
    G: int = 10
    level: float = 50.0
    n_masks: int = 200
    n_rollouts: int = 20
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"
    env_params: dict[str, Any] = field(default_factory=dict)
    learner_params: dict[str, Any] = field(default_factory=dict)

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.H, self.T, self.G)

    @property
    def keep_fraction(self):
        kept = self.geometry.n_cells - masked_cell_target(self.geometry, self.level)
        return kept / self.geometry.n_cells

    def validate(self):
        if self.env_name not in ENV_NAMES:
            raise ConfigError(f"unknown env {self.env_name!r}", key="env")
        if self.learner_name not in LEARNER_NAMES:
            raise ConfigError(f"unknown learner {self.learner_name!r}", key="learner")
        for key in ("H", "T", "G", "n_masks", "n_rollouts", "workers"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1", key=key)
        if self.T % self.G:
            raise ConfigError(f"G={self.G} does not divide T={self.T}", key="G")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", key="seed")
        check_level(self.geometry, self.level)
        return self


def masked_cell_target(geom: GridGeometry, level) -> int:
    return round_half_up(Fraction(str(level)) * geom.n_cells / 100)


def check_level(geom: GridGeometry, level):
    if not 0 <= level < 100:
        if level >= 100:
            raise ConfigError("level leaves zero kept cells", key="level")
        raise ConfigError(f"level must be in [0, 100), got {level}", key="level")
    if masked_cell_target(geom, level) >= geom.n_cells:
        raise ConfigError("level leaves zero kept cells", key="level")
