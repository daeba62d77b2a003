import numpy as np
import pytest

from ilmask import kernels
from ilmask.core import ContractError, ImportanceMap, RunConfig
from ilmask.engine import build_demos, combine_maps, run, variance_probe
from ilmask.learners import make_stub_constant
from ilmask.masking import enumerate_masks

from conftest import fixture_config, planted_cells


def test_two_mask_worked_example():
    masks = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    sums = kernels.accumulate(masks, np.array([4.0, 2.0]))
    m = ImportanceMap.from_sums(sums.reshape(1, 2), 2, 0.5)
    np.testing.assert_array_equal(m.normalized, [[4.0, 2.0]])


def test_normalisation_identity_from_runlog():
    cfg = RunConfig(n_masks=40, seed=3)
    imap, log = run(cfg)
    means = np.array([r.mean_return for r in log.records])
    cells = np.stack([m.cells for m in log.masks]).astype(float)
    expected = np.tensordot(means, cells, axes=1) / (imap.keep_fraction * len(log.masks))
    np.testing.assert_allclose(imap.normalized, expected, rtol=1e-9, atol=1e-12)
    assert [r.mask_index for r in log.records] == list(range(40))
    assert all(r.masked_cell_count == 100 for r in log.records)


def test_stub_map_is_count_weighted():
    cfg = RunConfig(env_name="corridor", T=15, G=5, H=2, n_masks=30, seed=1)
    imap, log = run(cfg, learner=make_stub_constant(-15))
    k = np.sum([m.cells for m in log.masks], axis=0, dtype=np.int64)
    np.testing.assert_allclose(imap.normalized, -15 * k / (imap.keep_fraction * 30), rtol=1e-12)


def test_masks_must_share_keep_fraction():
    cfg = RunConfig(H=1, T=4, G=4)
    masks = enumerate_masks(cfg.geometry, 1) + enumerate_masks(cfg.geometry, 2)
    with pytest.raises(ContractError):
        run(cfg, masks=masks)


def test_worker_count_does_not_change_map():
    cfg = RunConfig(n_masks=24, seed=8)
    a, la = run(cfg)
    b, lb = run(RunConfig(n_masks=24, seed=8, workers=2))
    assert a.normalized.tobytes() == b.normalized.tobytes()
    assert [r.derived_seed for r in la.records] == [r.derived_seed for r in lb.records]


def test_demo_mismatch_rejected():
    cfg = RunConfig()
    with pytest.raises(ContractError):
        run(RunConfig(T=30), demos=build_demos(cfg))


def test_combine_identity_and_cancellation(rng):
    x = rng.normal(size=(3, 4))
    one = ImportanceMap.from_normalized(x)
    assert combine_maps([one]) is one
    both = combine_maps([one, ImportanceMap.from_normalized(-x)])
    np.testing.assert_array_equal(both.normalized, np.zeros((3, 4)))
    with pytest.raises(ContractError):
        combine_maps([one, ImportanceMap.from_normalized(np.zeros((2, 2)))])


def test_probe_stub_has_no_spread():
    cfg = RunConfig(env_name="corridor", T=20, G=10, H=3)
    stats = variance_probe(cfg, 10, learner=make_stub_constant(-20))
    assert len(stats) == 10 and len({s.mean for s in stats}) == 1


def test_probe_needs_ten_segments():
    with pytest.raises(ContractError):
        variance_probe(RunConfig(G=5), 3)


@pytest.mark.slow
def test_combined_map_keeps_planted_ordering():
    maps, key_cells, tail_cells = [], None, None
    cfg0 = fixture_config(0)
    demos = build_demos(cfg0)
    key_cells, tail_cells = planted_cells(cfg0, demos)
    for seed in range(5):
        # same demos, independent mask draws per seed
        imap, _ = run(fixture_config(seed), demos=demos)
        maps.append(imap)
    z = combine_maps(maps).normalized
    assert z[key_cells].mean() > z[tail_cells].mean()
