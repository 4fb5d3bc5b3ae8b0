"""Acceptance suite: ten criteria, each timed and reported on one line.

Every criterion prints ``criterion N: PASS|FAIL ...`` with its measured
runtime and limit; the test fails if either the check or the time budget
is missed.
"""
import functools
import time

import numpy as np
import pytest

from smpop.data import load_data_dir, write_data_dir
from smpop.folds import (
    ensemble_weighted, fold_rows, make_group_kfold, median_aggregate, pipeline_from_folds,
    prepare_fold, prepare_folds,
)
from smpop.gbdt import GbdtConfig, fit_gbdt, predict_gbdt
from smpop.metrics import feature_correlation_report, mae, spearman_src
from smpop.mftm import CANONICAL_ORDER, assemble_features
from smpop.neuro import MlpConfig, grad_check, init_mlp
from smpop.numlin import fit_pca, inverse_transform_pca, jacobi_eigh, transform_pca
from smpop.synth import SynthConfig, generate_synthetic
from oracles import closed_form_eigvals, direct_mae, greedy_folds, tied_vector

pytestmark = pytest.mark.slow


def report(capsys, number, ok, elapsed, limit, detail):
    within = elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    with capsys.disabled():
        print(f"\ncriterion {number}: {status} ({elapsed:.2f}s / {limit}s limit) {detail}")
    assert ok, detail
    assert within, f"runtime {elapsed:.2f}s exceeds {limit}s"


@functools.lru_cache(maxsize=None)
def synthetic_dirs(root, sigma=None):
    cfg = SynthConfig() if sigma is None else SynthConfig(sigma=sigma)
    generate_synthetic(cfg, root)
    return load_data_dir(f"{root}/train"), load_data_dir(f"{root}/test")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("acceptance"))


_pinned_cache = {}


def pinned_pipeline(workdir, with_eu=True):
    """Pipeline on the pinned fixture (k=5, both models, alpha 0.7), with or without the eu block."""
    if "folds" not in _pinned_cache:
        train, test = synthetic_dirs(f"{workdir}/pinned")
        plan = make_group_kfold(train, 5)
        _pinned_cache["y"] = test.labels()
        _pinned_cache["folds"] = prepare_folds(train, test, plan, CANONICAL_ORDER)
    key = "with_eu" if with_eu else "without_eu"
    if key not in _pinned_cache:
        keep = None if with_eu else [b for b in CANONICAL_ORDER if b != "eu"]
        _pinned_cache[key] = pipeline_from_folds(_pinned_cache["folds"], GbdtConfig(), MlpConfig(), 0.7, keep)
    return _pinned_cache["y"], _pinned_cache[key]


def vector_ranks(x):
    # Comparison-count ranks: 1 + #smaller + (#equal - 1) / 2.
    less = (x[None, :] < x[:, None]).sum(axis=1)
    equal = (x[None, :] == x[:, None]).sum(axis=1)
    return 1 + less + (equal - 1) / 2


def textbook_pearson(a, b):
    n = a.size
    cov = np.sum((a - a.mean()) * (b - b.mean())) / (n - 1)
    return cov / (np.sqrt(np.sum((a - a.mean()) ** 2) / (n - 1)) * np.sqrt(np.sum((b - b.mean()) ** 2) / (n - 1)))


def test_criterion_1_metric_oracles(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    src_err = mae_err = 0.0
    for _ in range(1000):
        a, b = tied_vector(rng, 100, 0.3), tied_vector(rng, 100, 0.3)
        oracle = textbook_pearson(vector_ranks(a), vector_ranks(b))
        src_err = max(src_err, abs(spearman_src(a, b) - oracle))
        mae_err = max(mae_err, abs(mae(a, b) - direct_mae(a, b)))
    ok = src_err <= 1e-12 and mae_err <= 1e-12
    report(capsys, 1, ok, time.perf_counter() - t, 5,
           f"max |SRC - oracle| = {src_err:.2e}, max |MAE - oracle| = {mae_err:.2e}")


def test_criterion_2_pca_suite(capsys):
    t = time.perf_counter()
    worst = {"ortho": 0.0, "variance": 0.0, "closed_form": 0.0}
    monotone = True
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(5, 60)), int(rng.integers(2, 12))
        X = rng.normal(size=(n, d)) @ rng.normal(size=(d, d)) + rng.normal(size=d)
        m = fit_pca(X)
        c = m.n_components
        worst["ortho"] = max(worst["ortho"], np.max(np.abs(m.components @ m.components.T - np.eye(c))))
        Z = transform_pca(m, X)
        worst["variance"] = max(worst["variance"], np.max(np.abs(Z.var(axis=0, ddof=1) - m.eigenvalues)))
        errs = [np.linalg.norm(X - inverse_transform_pca(m, transform_pca(m, X, k))) for k in range(c + 1)]
        monotone &= all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
        M = rng.normal(size=(2 + seed % 2,) * 2)
        A = (M + M.T) / 2
        worst["closed_form"] = max(worst["closed_form"], np.max(np.abs(jacobi_eigh(A)[0] - closed_form_eigvals(A))))
    ok = monotone and all(v <= 1e-8 for v in worst.values())
    report(capsys, 2, ok, time.perf_counter() - t, 10,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", reconstruction monotone={monotone}")


def test_criterion_3_gbdt_suite(capsys):
    t = time.perf_counter()
    checks = {}
    mono = True
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(400, 6))
        y = np.sin(2 * X[:, 0]) + X[:, 1] * X[:, 2] + rng.normal(scale=0.2, size=400)
        m = fit_gbdt(X, y, GbdtConfig(num_trees=80, learning_rate=0.1, seed=seed))
        mono &= bool(np.all(np.diff(m.train_loss) <= 0))
    checks["loss monotone"] = mono

    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([1.0, 1.5, 7.0, 8.0])
    g = y.mean() - y
    best, best_thr = -np.inf, None
    for thr in (0.5, 1.5, 2.5):
        L = x < thr
        gain = 0.5 * (g[L].sum() ** 2 / (L.sum() + 1) + g[~L].sum() ** 2 / ((~L).sum() + 1) - g.sum() ** 2 / 5)
        if gain > best:
            best, best_thr = gain, thr
    m = fit_gbdt(x[:, None], y, GbdtConfig(num_trees=1, learning_rate=1.0, max_leaves=2, min_samples_leaf=1))
    checks["split = oracle"] = m.trees[0].threshold[0] == best_thr

    xs = np.linspace(-1, 1, 200)
    ys = np.where(xs >= 0, 10.0, 0.0)
    step = fit_gbdt(xs[:, None], ys, GbdtConfig(num_trees=1, learning_rate=1.0, l2_reg=0.0, max_leaves=2))
    checks["step {0,10}"] = (np.array_equal(predict_gbdt(step, xs[:, None]), ys)
                             and predict_gbdt(step, [[-1.0], [1.0]]).tolist() == [0.0, 10.0])

    rng = np.random.default_rng(9)
    X = rng.normal(size=(500, 8))
    y = X @ rng.normal(size=8) + rng.normal(size=500)
    cfg = GbdtConfig(num_trees=100, seed=3)
    checks["refit byte-identical"] = fit_gbdt(X, y, cfg).dumps() == fit_gbdt(X, y, cfg).dumps()
    report(capsys, 3, all(checks.values()), time.perf_counter() - t, 30,
           ", ".join(f"{k}={v}" for k, v in checks.items()))


def test_criterion_4_grad_check(capsys):
    t = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 6))
        model = init_mlp(d, MlpConfig(hidden=(7, 5), seed=seed), rng)
        model.biases = [rng.normal(scale=0.1, size=b.shape) for b in model.biases]
        worst = max(worst, grad_check(model, rng.normal(size=(5, d)), rng.normal(size=5)))
    report(capsys, 4, worst < 1e-4, time.perf_counter() - t, 10, f"max relative error {worst:.2e}")


def test_criterion_5_group_kfold(capsys):
    t = time.perf_counter()
    ok = True
    for trial in range(100):
        rng = np.random.default_rng(trial)
        n_users = int(rng.integers(5, 80))
        counts = {f"user{i}": int(rng.integers(1, 20)) for i in range(n_users)}
        uids = [u for u, c in counts.items() for _ in range(c)]
        rng.shuffle(uids)
        k = int(rng.integers(2, min(8, n_users) + 1))
        plan = make_group_kfold(uids, k)
        folds = plan.folds()
        disjoint = sum(map(len, folds)) == len(set().union(*map(set, folds))) == n_users
        sizes = [sum(counts[u] for u in f) for f in folds]
        ok &= disjoint and max(sizes) - min(sizes) <= max(counts.values()) and all(folds)
    hand = ["a"] * 3 + ["b"] * 2 + list("cdefg")
    plan = make_group_kfold(hand, 3)
    sizes = [sum(hand.count(u) for u in f) for f in plan.folds()]
    hand_ok = (sizes == [4, 3, 3] and plan.folds() == [["a", "g"], ["b", "e"], ["c", "d", "f"]]
               and greedy_folds({u: hand.count(u) for u in set(hand)}, 3)[1] == sizes)
    report(capsys, 5, ok and hand_ok, time.perf_counter() - t, 5,
           f"100 plans disjoint and balanced={ok}, hand example sizes {sizes}")


def test_criterion_6_profile_block_gain(capsys, workdir):
    t = time.perf_counter()
    y, full = pinned_pipeline(workdir, with_eu=True)
    _, ablated = pinned_pipeline(workdir, with_eu=False)
    with_eu = spearman_src(y, full.ensemble)
    without = spearman_src(y, ablated.ensemble)
    report(capsys, 6, with_eu - without >= 0.10, time.perf_counter() - t, 180,
           f"SRC with eu {with_eu:.4f}, without eu {without:.4f}, delta {with_eu - without:.4f}")


def test_criterion_7_profile_correlation_ranking(capsys, workdir):
    t = time.perf_counter()
    train, _ = synthetic_dirs(f"{workdir}/pinned")
    matrix, _ = assemble_features(train, None, ("time", "n", "eu"))
    rep = feature_correlation_report(matrix, train.labels())
    ratio = rep.external_average / rep.other_average if rep.other_average > 0 else np.inf
    ok = rep.rank_of("follower") == 1 and ratio >= 3
    report(capsys, 7, ok, time.perf_counter() - t, 30,
           f"top feature {rep.rows[0].feature} ({rep.rows[0].abs_src:.3f}), external avg "
           f"{rep.external_average:.3f} vs other avg {rep.other_average:.3f} ({ratio:.1f}x)")


def test_criterion_8_ensemble_median_algebra(capsys, workdir):
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(2, 500))
    identity = (ensemble_weighted(a, b, 1.0).tobytes() == a.tobytes()
                and ensemble_weighted(a, b, 0.0).tobytes() == b.tobytes())
    medians = (median_aggregate([[1.0], [2.0], [9.0]]).tolist() == [2.0]
               and median_aggregate([[1.0], [2.0], [3.0], [10.0]]).tolist() == [2.5])
    shared = "with_eu" in _pinned_cache
    y, res = pinned_pipeline(workdir, with_eu=True)
    g, m = spearman_src(y, res.gbdt.prediction.aggregated), spearman_src(y, res.mlp.prediction.aggregated)
    e = spearman_src(y, res.ensemble)
    ok = identity and medians and e >= min(g, m) - 0.01
    note = " (pipeline shared with criterion 6)" if shared else ""
    report(capsys, 8, ok, time.perf_counter() - t, 60,
           f"identity={identity}, medians={medians}, SRC gbdt {g:.4f} mlp {m:.4f} ensemble {e:.4f}{note}")


def test_criterion_9_leakage_guard(capsys, workdir):
    t = time.perf_counter()
    blocks = CANONICAL_ORDER
    identical = True
    compared = 0
    for seed in (11, 12, 13):
        root = f"{workdir}/leak{seed}"
        generate_synthetic(SynthConfig(n_users=60, seed=seed), root)
        train = load_data_dir(f"{root}/train")
        plan = make_group_kfold(train, 3)
        for fold in range(plan.k):
            fitted = prepare_fold(train, train, plan, fold, blocks).state.dumps()
            tr, _ = fold_rows(train, plan, fold)
            part = train.subset(tr)
            write_data_dir(f"{root}/fold{fold}", part.posts, part.profiles, part.blocks)
            _, alone = assemble_features(load_data_dir(f"{root}/fold{fold}"), None, blocks)
            identical &= fitted == alone.dumps()
            compared += 1
    report(capsys, 9, identical, time.perf_counter() - t, 30,
           f"{compared} fold states byte-identical with held-out rows deleted: {identical}")


def test_criterion_10_noiseless_recovery(capsys, workdir):
    t = time.perf_counter()
    train, test = synthetic_dirs(f"{workdir}/noiseless", sigma=0.0)
    plan = make_group_kfold(train, 5)
    folds = prepare_folds(train, test, plan, CANONICAL_ORDER)
    res = pipeline_from_folds(folds, GbdtConfig(), MlpConfig(), 0.7)
    src = spearman_src(test.labels(), res.ensemble)
    report(capsys, 10, src > 0.99, time.perf_counter() - t, 120,
           f"held-out SRC {src:.4f} (gbdt {spearman_src(test.labels(), res.gbdt.prediction.aggregated):.4f}, "
           f"mlp {spearman_src(test.labels(), res.mlp.prediction.aggregated):.4f})")
