import numpy as np
import pytest
from hypothesis import given, strategies as st

from smpop.gbdt import (
    GbdtConfig, GbdtModel, bin_matrix, fit_gbdt, gbdt_loss, predict_gbdt, quantile_bins,
)


def test_quantile_bins_examples():
    assert quantile_bins([5, 5, 5]).size == 0
    assert quantile_bins([1, 2, 3, 4], max_bins=2).tolist() == [2.5]
    assert quantile_bins([3, 1, 2, 1]).tolist() == [1.5, 2.5]


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=400), st.integers(2, 255))
def test_quantile_bins_properties(xs, max_bins):
    e = quantile_bins(xs, max_bins)
    assert e.size <= max_bins - 1
    assert np.all(np.diff(e) > 0)
    if e.size:
        assert min(xs) <= e[0] and e[-1] < max(xs)


def test_config_validation():
    for bad in ({"num_trees": -1}, {"learning_rate": 0}, {"learning_rate": 1.5}, {"max_leaves": 1},
                {"max_bins": 256}, {"loss": "huber"}):
        with pytest.raises(ValueError):
            GbdtConfig(**bad)


def test_no_trees_predicts_base_score():
    m = fit_gbdt(np.zeros((25, 2)), np.full(25, 2.0), GbdtConfig(num_trees=0))
    assert predict_gbdt(m, np.ones((3, 2))).tolist() == [2.0, 2.0, 2.0]


def step_fixture():
    x = np.linspace(-1, 1, 200)
    return x[:, None], np.where(x >= 0, 10.0, 0.0)


def test_step_function_recovered_exactly():
    X, y = step_fixture()
    m = fit_gbdt(X, y, GbdtConfig(num_trees=1, learning_rate=1.0, l2_reg=0.0, max_leaves=2))
    p = predict_gbdt(m, X)
    assert set(p.tolist()) == {0.0, 10.0}
    assert np.array_equal(p, y)
    assert predict_gbdt(m, [[-1.0], [1.0]]).tolist() == [0.0, 10.0]


def split_gain(g, h, lam):
    return g * g / (h + lam)


def exhaustive_best_split(x, y, lam, min_leaf):
    """Brute-force oracle: first split of boosting round one over every threshold."""
    grad = np.mean(y) - y
    best = (-np.inf, None, None)
    values = np.unique(x)
    for lo, hi in zip(values[:-1], values[1:]):
        thr = (lo + hi) / 2
        left = x < thr
        if left.sum() < min_leaf or (~left).sum() < min_leaf:
            continue
        gain = 0.5 * (split_gain(grad[left].sum(), left.sum(), lam)
                      + split_gain(grad[~left].sum(), (~left).sum(), lam)
                      - split_gain(grad.sum(), len(x), lam))
        if gain > best[0]:
            best = (gain, thr, (-grad[left].sum() / (left.sum() + lam), -grad[~left].sum() / ((~left).sum() + lam)))
    return best


@pytest.mark.parametrize("x,y", [
    ([0.0, 1.0, 2.0, 3.0], [1.0, 1.5, 7.0, 8.0]),
    ([3.0, 1.0, 2.0, 0.0], [0.0, 9.0, 2.0, 4.0]),
    ([0.5, 0.1, 0.9, 0.3], [-3.0, 2.0, 1.0, 5.0]),
])
def test_split_matches_exhaustive_oracle(x, y):
    x, y = np.array(x), np.array(y)
    lam = 1.0
    _, thr, (vl, vr) = exhaustive_best_split(x, y, lam, 1)
    m = fit_gbdt(x[:, None], y, GbdtConfig(num_trees=1, learning_rate=1.0, max_leaves=2,
                                           min_samples_leaf=1, l2_reg=lam))
    t = m.trees[0]
    assert t.feature[0] == 0 and t.threshold[0] == thr
    assert t.value[t.left[0]] == pytest.approx(vl, abs=1e-12)
    assert t.value[t.right[0]] == pytest.approx(vr, abs=1e-12)


def random_regression(seed, n=300, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.sin(X[:, 0]) * 3 + X[:, 1] ** 2 - X[:, 2] + rng.normal(scale=0.3, size=n)
    return X, y


@pytest.mark.parametrize("seed", range(5))
def test_training_loss_non_increasing(seed):
    X, y = random_regression(seed)
    m = fit_gbdt(X, y, GbdtConfig(num_trees=60, learning_rate=0.2))
    loss = np.array(m.train_loss)
    assert len(loss) == 61
    assert np.all(np.diff(loss) <= 1e-12)
    assert gbdt_loss(m, X, y) == pytest.approx(loss[-1], rel=1e-12)


def test_interpolates_distinct_points():
    rng = np.random.default_rng(3)
    x = rng.permutation(50).astype(float)
    y = rng.normal(size=50) * 5
    m = fit_gbdt(x[:, None], y, GbdtConfig(num_trees=1, learning_rate=1.0, l2_reg=0.0,
                                           max_leaves=50, min_samples_leaf=1))
    assert np.mean(np.abs(predict_gbdt(m, x[:, None]) - y)) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_leaf_budget_and_min_samples(seed):
    X, y = random_regression(seed)
    cfg = GbdtConfig(num_trees=10, max_leaves=7, min_samples_leaf=15)
    m = fit_gbdt(X, y, cfg)
    for t in m.trees:
        leaves = t.left < 0
        assert t.n_leaves <= 7
        assert np.all(t.n_samples[leaves] >= 15)
        assert np.all(t.feature[~leaves] < X.shape[1])


def test_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 100, 400).astype(float)
    X = np.column_stack([x, rng.normal(size=400)])
    y = np.log1p(x) + X[:, 1]
    X2 = X.copy()
    X2[:, 0] = np.exp(x / 10) + 3
    cfg = GbdtConfig(num_trees=20, learning_rate=0.3)
    a, b = fit_gbdt(X, y, cfg), fit_gbdt(X2, y, cfg)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.threshold_bin, tb.threshold_bin)
        assert np.array_equal(ta.value, tb.value)
    assert np.array_equal(predict_gbdt(a, X), predict_gbdt(b, X2))


def test_deterministic_and_round_trip():
    X, y = random_regression(7)
    cfg = GbdtConfig(num_trees=30, seed=4)
    a, b = fit_gbdt(X, y, cfg), fit_gbdt(X, y, cfg)
    assert a.dumps() == b.dumps()
    back = GbdtModel.from_json(__import__("json").loads(a.dumps()))
    assert back.dumps() == a.dumps()
    assert np.array_equal(predict_gbdt(back, X), predict_gbdt(a, X))


def test_absolute_loss_runs_and_improves():
    X, y = random_regression(2)
    m = fit_gbdt(X, y, GbdtConfig(num_trees=50, loss="absolute", learning_rate=0.1))
    assert m.train_loss[-1] < m.train_loss[0]


def test_errors():
    with pytest.raises(ValueError):
        fit_gbdt(np.zeros((30, 2)), np.zeros(29))
    with pytest.raises(ValueError):
        fit_gbdt(np.zeros((30, 2)), np.r_[np.zeros(29), np.nan])
    with pytest.raises(ValueError):
        fit_gbdt(np.zeros((5, 2)), np.zeros(5))
    m = fit_gbdt(np.zeros((30, 2)), np.zeros(30), GbdtConfig(num_trees=1))
    with pytest.raises(ValueError):
        predict_gbdt(m, np.zeros((2, 3)))


def test_bin_matrix_routing_rule():
    edges = [np.array([1.5, 2.5])]
    assert bin_matrix(np.array([[1.0], [1.5], [2.0], [3.0]]), edges)[:, 0].tolist() == [0, 1, 1, 2]
