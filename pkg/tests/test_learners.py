import numpy as np
import pytest
from hypothesis import given, strategies as st

from ilmask.core import ConfigError, GridGeometry, MaskGrid
from ilmask.envs import evaluate, expert_policy, gen_demos, key_pickup_frames, make_env
from ilmask.learners import LearnerSpec, TrainingSet, make_stub_constant, train
from ilmask.masking import apply_mask

from conftest import fixture_config

CORRIDOR = make_env("corridor", horizon=15)
KEYDOOR = make_env("keydoor", horizon=20)


def test_majority_vote():
    data = TrainingSet.from_pairs([(3, 1), (3, 1), (3, 0)])
    pol = train(LearnerSpec("bc_tabular"), data, 0, KEYDOOR)
    assert pol.act(3, np.random.default_rng(0)) == 1


def test_majority_tie_takes_lowest_action():
    data = TrainingSet.from_pairs([(3, 2), (3, 1)])
    assert train(LearnerSpec("bc_tabular"), data, 0, KEYDOOR).action_table()[3] == 1


def test_unseen_state_fallbacks():
    data = TrainingSet.from_pairs([(0, 3)])
    uni = train(LearnerSpec("bc_tabular"), data, 0, KEYDOOR)
    np.testing.assert_array_equal(uni.probs[10], np.full(5, 0.2))
    near = train(LearnerSpec("bc_tabular", {"fallback": "nearest"}), data, 0, KEYDOOR)
    assert (near.action_table()[:-1] == 3).all()


def test_bad_learner_settings():
    with pytest.raises(ConfigError):
        LearnerSpec("dqn")
    with pytest.raises(ConfigError):
        LearnerSpec("bc_tabular", {"fallback": "random"})
    with pytest.raises(ConfigError):
        LearnerSpec("bc_linear", {"momentum": 0.9})


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 4)), min_size=1, max_size=60))
def test_bc_tabular_action_is_a_mode(pairs):
    pol = train(LearnerSpec("bc_tabular"), TrainingSet.from_pairs(pairs), 0, KEYDOOR)
    table = pol.action_table()
    for s in {p[0] for p in pairs}:
        counts = np.bincount([a for x, a in pairs if x == s], minlength=5)
        assert counts[table[s]] == counts.max()


def separable(pairs):
    # one-hot state features: a set is separable iff no state carries two actions
    actions = {}
    for s, a in pairs:
        actions.setdefault(s, set()).add(a)
    return all(len(v) == 1 for v in actions.values())


def test_bc_linear_two_state_separable():
    pairs = [(0, 1)] * 5 + [(1, 3)] * 2
    assert separable(pairs)
    pol = train(LearnerSpec("bc_linear"), TrainingSet.from_pairs(pairs), 0, KEYDOOR)
    assert all(pol.action_table()[s] == a for s, a in pairs)


@given(st.dictionaries(st.integers(0, 50), st.integers(0, 4), min_size=1, max_size=20),
       st.integers(0, 2**31))
def test_bc_linear_fits_separable_sets(labels, seed):
    pairs = [(s, a) for s, a in labels.items() for _ in range(1 + s % 3)]
    assert separable(pairs)
    table = train(LearnerSpec("bc_linear"), TrainingSet.from_pairs(pairs), seed, KEYDOOR).action_table()
    assert np.mean([table[s] == a for s, a in pairs]) == 1.0


def test_bc_linear_picks_unique_mode_when_not_separable():
    pairs = [(4, 0)] * 3 + [(4, 2)] * 5
    assert not separable(pairs)
    assert train(LearnerSpec("bc_linear"), TrainingSet.from_pairs(pairs), 0, KEYDOOR).action_table()[4] == 2


@pytest.mark.parametrize("params,T", [({}, 20), ({"start": "random"}, 30)])
def test_adv_il_reaches_most_of_expert_return(params, T):
    env = make_env("keydoor", params, horizon=T)
    expert = evaluate(env, expert_policy(env), 200, 1).mean
    geom = GridGeometry(20, T, 10)
    for seed in range(3):
        data = apply_mask(gen_demos(env, 20, seed), MaskGrid(np.ones(geom.shape, np.uint8), 1.0), geom)
        pol = train(LearnerSpec("adv_il"), data, seed, env)
        assert evaluate(env, pol, 200, 1).mean >= 0.8 * expert
        assert len(pol.info["round_returns"]) == 8


def test_stub_noop_corridor():
    pol = train(make_stub_constant(-15), TrainingSet.from_pairs([]), 0, CORRIDOR)
    assert evaluate(CORRIDOR, pol, 5, 3).mean == -15


def test_stub_ignores_data():
    full = TrainingSet.from_pairs([(0, 1), (1, 1)])
    a = train(make_stub_constant(-15), full, 0, CORRIDOR)
    b = train(make_stub_constant(-15), TrainingSet.from_pairs([]), 0, CORRIDOR)
    np.testing.assert_array_equal(a.probs, b.probs)


def test_stub_unreachable_return():
    with pytest.raises(ConfigError):
        train(make_stub_constant(123.0), TrainingSet.from_pairs([]), 0, CORRIDOR)


def test_empty_training_set_gives_flagged_uniform():
    pol = train(LearnerSpec("bc_linear"), TrainingSet.from_pairs([]), 0, KEYDOOR)
    assert pol.info["empty_trainset"] is True
    np.testing.assert_array_equal(pol.probs, np.full_like(pol.probs, 0.2))


@pytest.mark.parametrize("name", ["bc_tabular", "bc_linear", "adv_il"])
def test_training_is_deterministic(name):
    env = make_env("keydoor", {"start": "random"}, horizon=30)
    d = gen_demos(env, 5, 1)
    geom = GridGeometry(5, 30, 10)
    data = apply_mask(d, MaskGrid(np.ones(geom.shape, np.uint8), 1.0), geom)
    a, b = (train(LearnerSpec(name), data, 11, env) for _ in range(2))
    np.testing.assert_array_equal(a.probs, b.probs)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["bc_tabular", "bc_linear", "adv_il"])
def test_removing_key_snippets_hurts(name):
    full, cut = [], []
    for seed in range(5):
        cfg = fixture_config(seed)
        env = make_env("keydoor", cfg.env_params, horizon=cfg.T)
        demos = gen_demos(env, cfg.H, seed)
        geom = cfg.geometry
        key_cells = key_pickup_frames(env, demos).reshape(cfg.H, cfg.G, -1).any(axis=2)
        for cells, acc in ((np.ones(geom.shape), full), (~key_cells, cut)):
            data = apply_mask(demos, MaskGrid(cells.astype(np.uint8), cells.mean()), geom)
            acc.append(evaluate(env, train(LearnerSpec(name), data, seed, env), 100, 7).mean)
    print(f"{name}: full {np.mean(full):.3f} without key snippets {np.mean(cut):.3f}")
    assert np.mean(cut) < np.mean(full)
