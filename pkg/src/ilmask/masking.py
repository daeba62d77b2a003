"""Random snippet masks and their application to demonstrations."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .core import (ContractError, DemoSet, GridGeometry, MaskGrid, check_level, derive,
                   masked_cell_target)
from .learners import TrainingSet


def gen_masks(geom: GridGeometry, level: float, N: int, seed: int) -> list[MaskGrid]:
    """``N`` masks, each removing exactly ``round(level% * H * G)`` cells.

    Cells are drawn uniformly without replacement; mask ``i`` uses the child
    seed ``derive(seed, i)`` so masks do not depend on one another.
    """
    check_level(geom, level)
    if N < 1:
        raise ContractError("need at least one mask")
    n = geom.n_cells
    n_masked = masked_cell_target(geom, level)
    p = (n - n_masked) / n
    masks = []
    for i in range(N):
        rng = np.random.default_rng(derive(seed, i))
        cells = np.ones(n, dtype=np.uint8)
        cells[rng.choice(n, size=n_masked, replace=False)] = 0
        masks.append(MaskGrid(cells.reshape(geom.shape), p))
    return masks


def enumerate_masks(geom: GridGeometry, n_masked: int) -> list[MaskGrid]:
    """Every mask with exactly ``n_masked`` removed cells, in lexicographic order."""
    n = geom.n_cells
    if not 0 <= n_masked < n:
        raise ContractError(f"n_masked must be in [0, {n})")
    p = (n - n_masked) / n
    out = []
    for removed in combinations(range(n), n_masked):
        cells = np.ones(n, dtype=np.uint8)
        cells[list(removed)] = 0
        out.append(MaskGrid(cells.reshape(geom.shape), p))
    return out


def frame_mask(mask: MaskGrid, geom: GridGeometry) -> np.ndarray:
    """Expand an (H, G) snippet mask to an (H, T) boolean frame mask."""
    if mask.shape != geom.shape:
        raise ContractError(f"mask shape {mask.shape} does not match grid {geom.shape}")
    return np.repeat(mask.cells.astype(bool), geom.frames_per_snippet, axis=1)


def apply_mask(demos: DemoSet, mask: MaskGrid, geom: GridGeometry) -> TrainingSet:
    if (demos.H, demos.T) != (geom.H, geom.T):
        raise ContractError(f"demos are {demos.H}x{demos.T} but grid is {geom.H}x{geom.T}")
    keep = frame_mask(mask, geom)
    traj, frame = np.nonzero(keep)
    return TrainingSet(demos.states[keep], demos.actions[keep], traj, frame)


def segment_probe_masks(geom: GridGeometry, n: int, seed: int) -> list[MaskGrid]:
    """Independent fair-coin masks over ten segments per trajectory.

    All-zero draws are redrawn so every probe keeps some data.
    """
    if geom.G != 10:
        raise ContractError(f"segment probe uses G=10, got G={geom.G}")
    masks = []
    for i in range(n):
        rng = np.random.default_rng(derive(seed, i))
        cells = rng.random(geom.shape) < 0.5
        while not cells.any():
            cells = rng.random(geom.shape) < 0.5
        masks.append(MaskGrid(cells.astype(np.uint8), 0.5))
    return masks
