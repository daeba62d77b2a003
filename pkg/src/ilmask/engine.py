"""Mask / retrain / evaluate loop that builds an importance map.

Each mask is an independent job. Jobs may run in a process pool, but their
results are reduced in ascending mask index, so the map does not depend on
the number of workers.
"""
from __future__ import annotations

import logging
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from ._jit import backend_name
from .core import (ContractError, DemoSet, GridGeometry, ImportanceMap, MaskGrid, ReturnStats,
                   RunConfig, cell_count, derive)
from .envs import TabularEnv, evaluate, gen_demos, make_env
from .learners import LearnerSpec, train
from .masking import apply_mask, gen_masks, segment_probe_masks

log = logging.getLogger(__name__)

# independent seed streams hanging off the master seed
DEMO_STREAM, MASK_STREAM, JOB_STREAM, PROBE_STREAM, CURVE_STREAM, TRANSFER_STREAM = range(1, 7)


@dataclass
class RunLogRecord:
    mask_index: int
    derived_seed: int
    masked_cell_count: int
    mean_return: float
    std_return: float
    empty_trainset_flag: bool
    wall_time: float


@dataclass
class RunLog:
    records: list[RunLogRecord]
    masks: list[MaskGrid] = field(repr=False, default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def mean_returns(self):
        return np.array([r.mean_return for r in self.records])


@dataclass
class Context:
    """Everything a job needs besides its mask and seed."""

    env: TabularEnv
    learner: LearnerSpec
    demos: DemoSet
    geom: GridGeometry
    n_rollouts: int


def build_env(config: RunConfig) -> TabularEnv:
    return make_env(config.env_name, config.env_params, horizon=config.T)


def build_learner(config: RunConfig) -> LearnerSpec:
    return LearnerSpec(config.learner_name, dict(config.learner_params))


def build_demos(config: RunConfig, env: TabularEnv | None = None) -> DemoSet:
    env = env or build_env(config)
    return gen_demos(env, config.H, derive(config.seed, DEMO_STREAM))


def make_context(config: RunConfig, demos: DemoSet | None = None, learner=None) -> Context:
    config.validate()
    env = build_env(config)
    if demos is None:
        demos = build_demos(config, env)
    if (demos.H, demos.T) != (config.H, config.T):
        raise ContractError(f"demos are {demos.H}x{demos.T}, config says {config.H}x{config.T}")
    if demos.env_name != env.name:
        raise ContractError(f"demos recorded in {demos.env_name!r}, config env is {env.name!r}")
    return Context(env, learner or build_learner(config), demos, config.geometry, config.n_rollouts)


def retrain_evaluate(ctx: Context, mask: MaskGrid, seed: int):
    """Train a fresh model on the masked demos and score it over J rollouts.

    Returns ``(stats, policy)``; ``policy.info`` carries learner diagnostics.
    """
    data = apply_mask(ctx.demos, mask, ctx.geom)
    policy = train(ctx.learner, data, derive(seed, 0), ctx.env)
    return evaluate(ctx.env, policy, ctx.n_rollouts, derive(seed, 1)), policy


# -- job execution ----------------------------------------------------------

_WORKER_CTX: Context | None = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _job(item):
    index, mask, seed = item
    t0 = time.perf_counter()
    stats, policy = retrain_evaluate(_WORKER_CTX, mask, seed)
    info = {k: v for k, v in policy.info.items() if k in ("empty_trainset", "round_returns")}
    return index, stats, info, time.perf_counter() - t0


def run_jobs(ctx: Context, items, workers: int = 1):
    """Run ``(index, mask, seed)`` jobs; results come back sorted by index."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        _init_worker(ctx)
        try:
            out = [_job(it) for it in items]
        finally:
            _init_worker(None)
    else:
        try:
            mp_ctx = mp.get_context("fork")
        except ValueError:  # pragma: no cover - platforms without fork
            mp_ctx = None
        chunk = max(1, len(items) // (4 * workers))
        with ProcessPoolExecutor(workers, mp_context=mp_ctx, initializer=_init_worker,
                                 initargs=(ctx,)) as pool:
            out = list(pool.map(_job, items, chunksize=chunk))
    return sorted(out, key=lambda r: r[0])


# -- public operations ------------------------------------------------------

def run(config: RunConfig, demos: DemoSet | None = None, masks: list[MaskGrid] | None = None,
        learner: LearnerSpec | None = None) -> tuple[ImportanceMap, RunLog]:
    """Estimate the importance map for ``config``.

    ``masks`` overrides the random draw (used for exhaustive enumeration); all
    supplied masks must share one keep fraction.
    """
    ctx = make_context(config, demos, learner)
    if masks is None:
        masks = gen_masks(ctx.geom, config.level, config.n_masks, derive(config.seed, MASK_STREAM))
    if not masks:
        raise ContractError("need at least one mask")
    fractions = {m.keep_fraction for m in masks}
    if len(fractions) != 1:
        raise ContractError(f"masks disagree on keep fraction: {sorted(fractions)}")
    p = fractions.pop()

    items = [(i, m, derive(config.seed, JOB_STREAM, i)) for i, m in enumerate(masks)]
    t0 = time.perf_counter()
    results = run_jobs(ctx, items, config.workers)
    log.info("%d masks in %.2fs on %d workers (%s kernels)", len(masks),
             time.perf_counter() - t0, config.workers, backend_name())

    records = []
    for (i, mask, seed), (_, stats, info, wall) in zip(items, results):
        records.append(RunLogRecord(i, seed, cell_count(mask)[1], stats.mean, stats.std,
                                    info["empty_trainset"], wall))
    stacked = np.stack([m.cells.ravel() for m in masks])
    means = np.array([r.mean_return for r in records])
    sums = kernels.accumulate(stacked, means).reshape(ctx.geom.shape)
    meta = {"env": config.env_name, "learner": ctx.learner.name, "level": config.level,
            "seed": config.seed}
    runlog = RunLog(records, masks, info={"config": asdict(config),
                                          "learner_params": ctx.learner.params,
                                          "backend": backend_name()})
    return ImportanceMap.from_sums(sums, len(masks), p, meta), runlog


def combine_maps(maps: list[ImportanceMap]) -> ImportanceMap:
    """Cell-wise mean of the normalised fields of several maps."""
    if not maps:
        raise ContractError("nothing to combine")
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ContractError(f"maps differ in shape: {sorted(shapes)}")
    if len(maps) == 1:
        return maps[0]
    normalized = np.mean(np.stack([m.normalized for m in maps]), axis=0)
    p = float(np.mean([m.keep_fraction for m in maps]))
    N = sum(m.n_masks for m in maps)
    meta = {"combined_from": [dict(m.meta) for m in maps]}
    return ImportanceMap(normalized * p * N, N, p, normalized, meta)


def variance_probe(config: RunConfig, n_probe_masks: int, demos: DemoSet | None = None,
                   learner: LearnerSpec | None = None) -> list[ReturnStats]:
    """Retrain on ``n_probe_masks`` coin-flip segment masks and score each model."""
    if config.G != 10:
        raise ContractError(f"variance probe needs G=10, config has G={config.G}")
    ctx = make_context(config, demos, learner)
    masks = segment_probe_masks(ctx.geom, n_probe_masks, derive(config.seed, PROBE_STREAM))
    items = [(i, m, derive(config.seed, PROBE_STREAM, i)) for i, m in enumerate(masks)]
    return [stats for _, stats, _, _ in run_jobs(ctx, items, config.workers)]
