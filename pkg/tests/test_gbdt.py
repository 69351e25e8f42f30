import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faulttwin.dataset import Dataset
from faulttwin.errors import DegenerateLabels, InvalidData, ShapeMismatch
from faulttwin.gbdt import (
    CrossEntropyObjective,
    FocalObjective,
    GbdtModel,
    GbdtParams,
    Tree,
    feature_importance,
    fit,
    predict_proba,
    softmax,
)
from faulttwin.gbdt import _kernels
from faulttwin.gbdt.booster import _BinMapper

from oracles import best_split_bruteforce


def ds(x, y, names=None):
    x = np.asarray(x, dtype=float)
    return Dataset(names or [f"f{i}" for i in range(x.shape[1])], x, y)


def test_learns_the_prior_on_constant_features():
    y = np.array([0] * 80 + [1] * 20)
    model = fit(ds(np.ones((100, 3)), y), params=GbdtParams(num_boost_rounds=20),
                objective=CrossEntropyObjective())
    p = model.predict_proba(np.random.default_rng(0).normal(size=(10, 3)))
    np.testing.assert_allclose(p, np.tile([0.8, 0.2], (10, 1)), atol=0.01)


def test_separable_data_reaches_full_training_accuracy():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(200, 2))
    y = (x[:, 0] + 0.3 > 0).astype(int)
    d = ds(x, y)
    model = fit(d)
    assert (model.predict(d.rows) == y).all()


def test_root_split_matches_exhaustive_search():
    rng = np.random.default_rng(2)
    x = np.round(rng.normal(size=(300, 4)), 1)  # < 255 distinct values per column
    y = (x[:, 2] > 0.35).astype(int) | ((x[:, 0] < -1) & (rng.random(300) < 0.5))
    params = GbdtParams(num_boost_rounds=1, num_leaves=2, min_data_in_leaf=5, learning_rate=1.0)
    model = fit(ds(x, y), params=params, objective=CrossEntropyObjective(), n_classes=2)
    base = model.base_score
    g, h = CrossEntropyObjective().grad_hess(np.tile(base, (300, 1)), y)
    for c in range(2):
        gain, f, thr = best_split_bruteforce(x, g[:, c], h[:, c], 0.0, 5, 1e-3, 1.0)
        tree = model.trees[0][c]
        assert tree.feature[0] == f
        assert tree.threshold[0] == pytest.approx(thr, abs=1e-12)
        assert tree.gain[0] == pytest.approx(gain, rel=1e-9)


def test_leaf_values_are_newton_steps():
    x = np.array([[0.0]] * 50 + [[1.0]] * 50)
    y = np.array([0] * 50 + [1] * 50)
    params = GbdtParams(num_boost_rounds=1, num_leaves=2, min_data_in_leaf=1, learning_rate=0.5,
                        lambda_l2=1.0, max_delta_step=None)
    model = fit(ds(x, y), params=params, objective=CrossEntropyObjective())
    # base margins are (0, 0): p = 0.5, g = p - y, h = 1/4 per row
    tree = model.trees[0][1]
    left_g, left_h = 50 * 0.5, 50 * 0.25
    right_g, right_h = 50 * -0.5, 50 * 0.25
    leaves = tree.value[tree.feature < 0]
    np.testing.assert_allclose(sorted(leaves), sorted([-left_g / (left_h + 1) * 0.5,
                                                      -right_g / (right_h + 1) * 0.5]), rtol=1e-12)


def test_max_delta_step_clips_leaves():
    x = np.array([[0.0]] * 50 + [[1.0]] * 50)
    y = np.array([0] * 50 + [1] * 50)
    model = fit(ds(x, y), params=GbdtParams(num_boost_rounds=1, learning_rate=1.0, max_delta_step=0.3,
                                           min_data_in_leaf=1))
    assert np.abs(model.trees[0][0].value).max() <= 0.3 + 1e-15


def test_serialization_roundtrip_and_determinism(small_split):
    train, valid, _ = small_split
    p = GbdtParams(num_boost_rounds=6, num_leaves=6, bagging_fraction=0.7, feature_fraction=0.6)
    a = fit(train, valid, p, seed=3, n_classes=5)
    b = fit(train, valid, p, seed=3, n_classes=5)
    assert a.to_json() == b.to_json()
    back = GbdtModel.from_json(a.to_json())
    assert back.to_json() == a.to_json()
    np.testing.assert_array_equal(back.predict_proba(valid.rows), a.predict_proba(valid.rows))
    doc = json.loads(a.to_json())
    assert doc["schema_version"] == 1 and doc["feature_names"] == train.feature_names
    c = fit(train, valid, p, seed=4, n_classes=5)
    assert c.to_json() != a.to_json()


def test_every_round_has_one_tree_per_class(small_model):
    assert all(len(r) == 5 for r in small_model.trees)


def test_probabilities_are_valid(small_model):
    rows = np.random.default_rng(0).normal(0, 3, size=(500, 10))
    p = small_model.predict_proba(rows)
    assert (p >= 0).all() and (p <= 1).all()
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-9)
    np.testing.assert_array_equal(predict_proba(small_model, rows), p)


def test_batch_equals_row_by_row(small_model, small_split):
    rows = small_split[2].rows[:40]
    p = small_model.predict_proba(rows)
    for i in range(40):
        np.testing.assert_array_equal(small_model.predict_proba(rows[i:i + 1])[0], p[i])


def test_training_loss_is_non_increasing(small_split):
    train, _, _ = small_split
    for objective in (CrossEntropyObjective(), FocalObjective(2.0)):
        losses = []

        def record(state):
            losses.append(float(np.mean(objective.loss(state.train_margin, train.labels))))

        fit(train, params=GbdtParams(num_boost_rounds=25), objective=objective, n_classes=5, callback=record)
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_early_stopping_records_best_iteration():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(400, 3))
    y = rng.integers(0, 2, 400)  # pure noise: validation loss stops improving quickly
    tr, va = ds(x[:300], y[:300]), ds(x[300:], y[300:])
    model = fit(tr, va, GbdtParams(num_boost_rounds=200, early_stopping_rounds=5, min_data_in_leaf=2))
    assert model.n_rounds < 200
    assert model.best_iteration == model.n_rounds - 5
    assert len(model.active_trees()) == model.best_iteration


def test_callback_can_stop_training(small_split):
    train = small_split[0]
    model = fit(train, params=GbdtParams(num_boost_rounds=50), n_classes=5,
                callback=lambda s: s.round < 7)
    assert model.n_rounds == 7


def test_zero_tree_model_is_uniform():
    model = GbdtModel(n_classes=4, trees=[], learning_rate=0.1, base_score=np.zeros(4),
                      feature_names=["a", "b"], params={}, objective={})
    np.testing.assert_allclose(model.predict_proba(np.zeros((3, 2))), 0.25)
    assert feature_importance(model, "gain").tolist() == [0.0, 0.0]


def test_stump_probabilities_by_hand():
    trees = [[Tree.stump(0, 0.5, -1.0, 2.0), Tree.stump(1, 0.0, 0.5, -0.5)]]
    model = GbdtModel(n_classes=2, trees=trees, learning_rate=1.0, base_score=np.array([0.1, -0.1]),
                      feature_names=["a", "b"], params={}, objective={})
    x = np.array([[0.2, 1.0], [0.9, -1.0]])
    expect = softmax(np.array([[0.1 - 1.0, -0.1 - 0.5], [0.1 + 2.0, -0.1 + 0.5]]))
    np.testing.assert_allclose(model.predict_proba(x), expect, rtol=1e-15)


def test_missing_values_go_left():
    model = GbdtModel(n_classes=2, trees=[[Tree.stump(0, 0.5, -1.0, 2.0), Tree.leaf(0.0)]],
                      learning_rate=1.0, base_score=np.zeros(2), feature_names=["a"], params={}, objective={})
    assert model.raw_margin(np.array([[np.nan]]))[0, 0] == -1.0


def test_feature_importance_by_hand():
    t = Tree(feature=[0, 1, -1, -1, -1], threshold=[0.0, 1.0, 0, 0, 0], left=[1, 2, -1, -1, -1],
             right=[4, 3, -1, -1, -1], value=[0, 0, 1.0, 2.0, 3.0], gain=[3.0, 1.0, 0, 0, 0],
             count=[10, 6, 3, 3, 4])
    model = GbdtModel(n_classes=2, trees=[[t, Tree.leaf(0.0)]], learning_rate=1.0, base_score=np.zeros(2),
                      feature_names=["a", "b", "c"], params={}, objective={})
    assert feature_importance(model, "gain").tolist() == [3.0, 1.0, 0.0]
    assert feature_importance(model, "split_count").tolist() == [1, 1, 0]


def test_only_used_feature_gets_importance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 4))
    x[:, [0, 1, 3]] = 0.0
    y = (x[:, 2] > 0).astype(int)
    imp = fit(ds(x, y), params=GbdtParams(num_boost_rounds=5)).feature_importance("gain")
    assert imp[2] > 0 and imp[[0, 1, 3]].sum() == 0


def test_fit_errors():
    with pytest.raises(DegenerateLabels):
        fit(ds(np.zeros((10, 2)), np.zeros(10, dtype=int)))
    bad = np.zeros((10, 2))
    bad[3, 1] = np.inf
    with pytest.raises(InvalidData):
        fit(ds(bad, np.arange(10) % 2))
    with pytest.raises(ShapeMismatch):
        fit(ds(np.zeros((10, 2)), np.arange(10) % 2), ds(np.zeros((4, 2)), np.arange(4) % 2, ["x", "y"]))
    with pytest.raises(InvalidData):
        fit(ds(np.zeros((10, 2)), np.arange(10) % 3), n_classes=2)


def test_predict_width_mismatch(small_model):
    with pytest.raises(ShapeMismatch):
        small_model.predict_proba(np.zeros((2, 3)))


@pytest.mark.parametrize("bad", [
    {"num_boost_rounds": 0}, {"learning_rate": 0.0}, {"learning_rate": 1.5}, {"num_leaves": 1},
    {"min_data_in_leaf": 0}, {"feature_fraction": 0.0}, {"bagging_fraction": 1.1}, {"lambda_l2": -1},
    {"max_depth": 0}, {"focal_gamma": -0.1}, {"n_histogram_bins": 1}, {"early_stopping_rounds": 0},
    {"max_delta_step": 0.0},
])
def test_params_bounds(bad):
    with pytest.raises(ValueError):
        GbdtParams(**bad)


def test_params_roundtrip():
    p = GbdtParams(num_leaves=7, max_depth=3)
    assert GbdtParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        GbdtParams.from_dict({"nope": 1})


def test_max_depth_is_respected(small_split):
    model = fit(small_split[0], params=GbdtParams(num_boost_rounds=3, max_depth=2, num_leaves=31), n_classes=5)
    assert max(t.depth() for r in model.trees for t in r) <= 2


def test_num_leaves_is_respected(small_split):
    model = fit(small_split[0], params=GbdtParams(num_boost_rounds=3, num_leaves=5), n_classes=5)
    assert max(int((t.feature < 0).sum()) for r in model.trees for t in r) <= 5


@settings(max_examples=30)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=300), st.integers(2, 16))
def test_bins_respect_thresholds(values, max_bins):
    x = np.array(values)[:, None]
    m = _BinMapper(x, max_bins)
    b = m.transform(x)[:, 0]
    assert b.max() < m.n_bins[0]
    for k, edge in enumerate(m.edges[0]):
        # bin <= k exactly when x <= edge
        np.testing.assert_array_equal(b <= k, x[:, 0] <= edge)


def test_tie_break_prefers_lowest_feature():
    x = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0]]), 20, axis=0)  # identical columns
    y = np.array([0] * 20 + [1] * 20)
    model = fit(ds(x, y), params=GbdtParams(num_boost_rounds=1, num_leaves=2, min_data_in_leaf=1))
    assert model.trees[0][0].feature[0] == 0


def test_histogram_kernel_matches_numpy():
    rng = np.random.default_rng(0)
    bins = rng.integers(0, 7, size=(100, 3)).astype(np.uint8)
    g, h = rng.normal(size=100), rng.random(100)
    rows = np.sort(rng.choice(100, 60, replace=False)).astype(np.int64)
    hist = _kernels.build_histogram(bins, rows, g, h, 7)
    for f in range(3):
        for b in range(7):
            sel = rows[bins[rows, f] == b]
            assert hist[f, b, 0] == pytest.approx(g[sel].sum(), abs=1e-12)
            assert hist[f, b, 1] == pytest.approx(h[sel].sum(), abs=1e-12)
            assert hist[f, b, 2] == len(sel)


@pytest.mark.parametrize("bagging", [1.0, 0.6])
def test_training_margins_equal_fresh_predictions(small_split, bagging):
    tr, va, _ = small_split
    seen = {}

    def grab(state):
        seen["train"], seen["valid"] = state.train_margin.copy(), state.valid_margin.copy()

    params = GbdtParams(num_boost_rounds=8, num_leaves=8, bagging_fraction=bagging, feature_fraction=0.7)
    model = fit(tr, va, params, n_classes=5, callback=grab)
    # routing by bin during training and by raw threshold afterwards agree up to summation order
    np.testing.assert_allclose(seen["train"], model.raw_margin(tr.rows), rtol=0, atol=1e-13)
    np.testing.assert_allclose(seen["valid"], model.raw_margin(va.rows), rtol=0, atol=1e-13)
