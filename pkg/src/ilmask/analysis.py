"""Checks on finished importance maps: threshold retraining, map deviation, transfer."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (ContractError, DemoSet, ImportanceMap, MaskGrid, ReturnStats, RunConfig,
                   derive, round_half_up)
from .engine import CURVE_STREAM, TRANSFER_STREAM, make_context, run, run_jobs
from .learners import LearnerSpec

log = logging.getLogger(__name__)

MODES = ("top", "bottom")


@dataclass(frozen=True)
class CurvePoint:
    percent_kept: float
    mode: str
    stats: ReturnStats | None
    seed: int
    error: str | None = None


def _kept_count(n, percent):
    return round_half_up(Fraction(str(percent)) * n / 100)


def importance_order(values):
    """Cell indices from most to least important; equal values by ascending index."""
    v = np.asarray(values, dtype=np.float64).ravel()
    return np.lexsort((np.arange(v.size), -v))


def threshold_mask(imap: ImportanceMap, percent_kept: float, mode: str = "top") -> MaskGrid:
    """Keep the ``percent_kept`` most (``top``) or least (``bottom``) important cells.

    Both modes read one total order (value descending, index ascending), so
    ``top`` at p% and ``bottom`` at (100-p)% split the grid exactly.
    """
    if not 0 < percent_kept <= 100:
        raise ContractError(f"percent_kept must be in (0, 100], got {percent_kept}")
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}, got {mode!r}")
    z = imap.normalized
    if not np.isfinite(z).all():
        raise ContractError("map has non-finite cells")
    n = z.size
    order = importance_order(z)
    if mode == "top":
        keep = order[:_kept_count(n, percent_kept)]
    else:
        keep = order[_kept_count(n, 100 - percent_kept):]
    if keep.size == 0:
        raise ContractError(f"{percent_kept}% of {n} cells keeps nothing")
    cells = np.zeros(n, dtype=np.uint8)
    cells[keep] = 1
    return MaskGrid(cells.reshape(z.shape), keep.size / n)


def random_mask(shape, n_kept, seed) -> MaskGrid:
    n = int(np.prod(shape))
    cells = np.zeros(n, dtype=np.uint8)
    cells[np.random.default_rng(seed).choice(n, size=n_kept, replace=False)] = 1
    return MaskGrid(cells.reshape(shape), n_kept / n)


def _point_seed(config, percent):
    # shared by both modes so percent=100 gives identical top/bottom runs
    return derive(config.seed, CURVE_STREAM, int(Fraction(str(percent)) * 1000))


def validation_curves(imap: ImportanceMap, config: RunConfig, percents,
                      demos: DemoSet | None = None, learner: LearnerSpec | None = None,
                      modes=MODES) -> list[CurvePoint]:
    """Retrain on the top/bottom ``percent`` cells of ``imap`` and score each model."""
    ctx = make_context(config, demos, learner)
    if imap.shape != ctx.geom.shape:
        raise ContractError(f"map {imap.shape} does not match grid {ctx.geom.shape}")
    slots, items = [], []
    for percent in percents:
        seed = _point_seed(config, percent)
        for mode in modes:
            try:
                items.append((len(slots), threshold_mask(imap, percent, mode), seed))
                slots.append(CurvePoint(percent, mode, None, seed))
            except ContractError as exc:
                log.warning("curve point %s%% %s skipped: %s", percent, mode, exc)
                slots.append(CurvePoint(percent, mode, None, seed, str(exc)))
    for index, stats, _, _ in run_jobs(ctx, items, config.workers):
        pt = slots[index]
        slots[index] = CurvePoint(pt.percent_kept, pt.mode, stats, pt.seed)
    return slots


def minmax(z):
    z = np.asarray(z, dtype=np.float64)
    lo, hi = z.min(), z.max()
    if hi == lo:
        return np.zeros_like(z)
    return (z - lo) / (hi - lo)


def compare_maps(a: ImportanceMap, b: ImportanceMap):
    """Element-wise |minmax(a) - minmax(b)| plus its mean and max."""
    if a.shape != b.shape:
        raise ContractError(f"map shapes differ: {a.shape} vs {b.shape}")
    dev = np.abs(minmax(a.normalized) - minmax(b.normalized))
    return dev, {"mean": float(dev.mean()), "max": float(dev.max())}


TRANSFER_LABELS = ("source", "target", "random")


def transfer_experiment(map_source: ImportanceMap, target_learner: LearnerSpec,
                        percent_kept: float, config: RunConfig, demos: DemoSet | None = None,
                        map_target: ImportanceMap | None = None, round_returns=None):
    """Train ``target_learner`` on three masks of equal size and score each.

    The masks come from the source map, from the target learner's own map
    (estimated with ``config`` when not given) and from a uniform draw. All
    three retrains share one seed. Pass a dict as ``round_returns`` to collect
    per-round curves from learners that log them.
    """
    ctx = make_context(config, demos, target_learner)
    if map_target is None:
        map_target, _ = run(config, ctx.demos, learner=target_learner)
    src = threshold_mask(map_source, percent_kept, "top")
    tgt = threshold_mask(map_target, percent_kept, "top")
    rnd = random_mask(src.shape, int(src.cells.sum()),
                      derive(config.seed, TRANSFER_STREAM, 1))
    seed = derive(config.seed, TRANSFER_STREAM, 0)
    items = [(i, m, seed) for i, m in enumerate((src, tgt, rnd))]
    out = []
    for index, stats, info, _ in run_jobs(ctx, items, config.workers):
        label = TRANSFER_LABELS[index]
        if round_returns is not None and "round_returns" in info:
            round_returns[label] = list(info["round_returns"])
        out.append((label, stats))
    return out
