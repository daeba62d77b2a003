import numpy as np
import pytest
from hypothesis import given, strategies as st

from ilmask.core import ConfigError, ContractError, DemoSet, GridGeometry, MaskGrid, cell_count
from ilmask.masking import apply_mask, enumerate_masks, gen_masks, segment_probe_masks


def test_full_scale_exact_count():
    masks = gen_masks(GridGeometry(20, 1000, 100), 50, 100, 0)
    assert len(masks) == 100
    assert {cell_count(m)[1] for m in masks} == {1000}


def test_level_zero_is_all_ones():
    masks = gen_masks(GridGeometry(2, 4, 4), 0, 3, 0)
    assert all(m.cells.all() and m.keep_fraction == 1.0 for m in masks)


def test_level_hundred_rejected():
    with pytest.raises(ConfigError, match="zero kept cells"):
        gen_masks(GridGeometry(2, 4, 4), 100, 3, 0)


@given(st.integers(1, 5), st.integers(1, 8), st.floats(0, 99), st.integers(0, 2**31))
def test_exact_count_and_declared_fraction(H, G, level, seed):
    geom = GridGeometry(H, G, G)
    try:
        masks = gen_masks(geom, level, 20, seed)
    except ConfigError:
        return
    masked = {cell_count(m)[1] for m in masks}
    assert len(masked) == 1
    kept = geom.n_cells - masked.pop()
    assert all(m.keep_fraction == kept / geom.n_cells for m in masks)


def test_uniformity_chi_square():
    from scipy.stats import chisquare
    masks = gen_masks(GridGeometry(2, 4, 4), 50, 10000, 3)
    freq = np.mean([m.cells.ravel() for m in masks], axis=0)
    assert np.abs(freq - 0.5).max() <= 0.02
    counts = freq * 10000
    assert chisquare(counts).pvalue > 0.01


def test_enumeration_has_all_combinations():
    masks = enumerate_masks(GridGeometry(1, 4, 4), 2)
    assert len(masks) == 6
    assert len({m.cells.tobytes() for m in masks}) == 6


def _demos(H=1, T=8):
    states = np.arange(H * T).reshape(H, T)
    return DemoSet("corridor", states, states % 3, states * 0.5, 3)


def test_apply_mask_picks_snippet_frames():
    geom = GridGeometry(1, 8, 4)
    data = apply_mask(_demos(), MaskGrid(np.array([[1, 0, 1, 0]]), 0.5), geom)
    assert data.frame_index.tolist() == [0, 1, 4, 5]
    assert data.states.tolist() == [0, 1, 4, 5]


def test_apply_mask_identity_and_single_cell():
    geom = GridGeometry(2, 8, 4)
    d = _demos(2, 8)
    full = apply_mask(d, MaskGrid(np.ones((2, 4), np.uint8), 1.0), geom)
    assert full.pairs == list(zip(d.states.ravel().tolist(), d.actions.ravel().tolist()))
    one = np.zeros((2, 4), np.uint8)
    one[1, 2] = 1
    part = apply_mask(d, MaskGrid(one, 1 / 8), geom)
    assert len(part) == 2 and part.states.tolist() == d.states[1, 4:6].tolist()


@given(st.integers(0, 2**31))
def test_apply_mask_preserves_content(seed):
    geom = GridGeometry(3, 8, 4)
    d = _demos(3, 8)
    mask = gen_masks(geom, 50, 1, seed)[0]
    data = apply_mask(d, mask, geom)
    np.testing.assert_array_equal(data.states, d.states[data.traj_index, data.frame_index])
    np.testing.assert_array_equal(data.actions, d.actions[data.traj_index, data.frame_index])


def test_apply_mask_shape_mismatch():
    with pytest.raises(ContractError):
        apply_mask(_demos(), MaskGrid(np.ones((1, 2), np.uint8), 1.0), GridGeometry(1, 8, 4))


def test_probe_masks():
    geom = GridGeometry(4, 20, 10)
    masks = segment_probe_masks(geom, 10, 5)
    assert len(masks) == 10 and all(m.shape == (4, 10) and m.cells.any() for m in masks)
    again = segment_probe_masks(geom, 10, 5)
    assert all(a == b for a, b in zip(masks, again))
    with pytest.raises(ContractError):
        segment_probe_masks(GridGeometry(1, 20, 5), 3, 0)


def test_probe_mean_kept_fraction():
    masks = segment_probe_masks(GridGeometry(1, 10, 10), 100000, 1)
    kept = np.mean([m.cells.mean() for m in masks])
    # all-zero redraws lift the mean by 0.5 * 2**-10 at most
    assert abs(kept - 0.5) <= 0.005
