import json

import numpy as np
import pytest

from smpop.ablation import render_ablation, run_ablation, write_ablation_csv
from smpop.data import load_data_dir
from smpop.folds import make_group_kfold
from smpop.gbdt import GbdtConfig
from smpop.metrics import feature_correlation_report, spearman_src
from smpop.mftm import assemble_features
from smpop.neuro import MlpConfig
from smpop.synth import SynthConfig, generate_synthetic, make_synthetic


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(sigma=-1)
    with pytest.raises(ValueError):
        SynthConfig(beta_hour=float("inf"))
    with pytest.raises(ValueError):
        SynthConfig.from_mapping({"bogus": 1})
    assert SynthConfig.from_mapping({"n_users": 10}).n_users == 10


def test_generation_is_byte_identical(tmp_path):
    cfg = SynthConfig(n_users=20)
    a = generate_synthetic(cfg, tmp_path / "a")
    b = generate_synthetic(cfg, tmp_path / "b")
    assert a["outputs"] == b["outputs"]
    for rel in a["outputs"]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert abs(np.linalg.norm(manifest["signal_direction"]) - 1) < 1e-12


def test_train_test_users_disjoint():
    data = make_synthetic(SynthConfig(n_users=50))
    assert not {p.uid for p in data.train_posts} & {p.uid for p in data.test_posts}
    assert all(p.label is not None for p in data.test_posts)


def test_pure_follower_signal_is_monotone(tmp_path):
    cfg = SynthConfig(n_users=40, sigma=0.0, beta_hour=0.0, beta_embed=0.0, profile_missing_rate=0.0)
    generate_synthetic(cfg, tmp_path)
    ds = load_data_dir(tmp_path / "train")
    m, _ = assemble_features(ds, None, ("time", "n", "eu"))
    rep = feature_correlation_report(m, ds.labels())
    assert rep.rank_of("follower") == 1 and rep.rows[0].abs_src == 1.0


def test_default_follower_correlation():
    data = make_synthetic(SynthConfig())
    posts = data.train_posts + data.test_posts
    follower = [data.profiles[p.uid].follower if p.uid in data.profiles else 0 for p in posts]
    assert abs(spearman_src(follower, [p.label for p in posts])) > 0.5


def test_embedding_signal_direction_is_leading_axis():
    data = make_synthetic(SynthConfig(n_users=200))
    blk = next(b for b in data.blocks if b.name == "image")
    X = blk.vectors.astype(np.float64)
    X -= X.mean(axis=0)
    top = np.linalg.svd(X, full_matrices=False)[2][0]
    assert abs(top @ data.direction) > 0.95


def test_ablation_rows(tiny_synth, tmp_path):
    train, test = load_data_dir(tiny_synth / "train"), load_data_dir(tiny_synth / "test")
    plan = make_group_kfold(train, 3)
    cfgs = {"gbdt": GbdtConfig(num_trees=15), "mlp": MlpConfig(epochs=3)}
    subsets = [("time", "eu"), ("time",), ("time", "eu")]
    rows = run_ablation(train, test, plan, cfgs, subsets, ["gbdt"])
    assert [r.blocks for r in rows] == subsets
    assert (rows[0].src, rows[0].mae) == (rows[2].src, rows[2].mae)
    assert rows[0].src > rows[1].src
    rows = run_ablation(train, test, plan, cfgs, subsets[:2], ["gbdt", "mlp", "ensemble"])
    assert [r.model for r in rows] == ["gbdt", "mlp", "ensemble"] * 2
    assert all(np.isfinite([r.src, r.mae]).all() for r in rows)
    write_ablation_csv(tmp_path / "a.csv", rows)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "blocks,model,src,mae" and lines[1].startswith("time+eu,gbdt,")
    assert "ensemble" in render_ablation(rows)
    with pytest.raises(ValueError):
        run_ablation(train, test, plan, cfgs, [("bogus",)])
