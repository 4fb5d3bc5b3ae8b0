"""``smp`` command line.

Every command accepts ``--config FILE`` (YAML or JSON). Top-level keys mirror
the flag names with dashes replaced by underscores; ``gbdt``, ``mlp``,
``transform`` and ``synth`` sections hold model, transform and generator
settings. Flags given on the command line win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import yaml

from .ablation import render_ablation, run_ablation, write_ablation_csv
from .data import DataError, load_data_dir, load_labels
from .folds import (
    DEFAULT_ALPHA, DEFAULT_K, GroupFoldPlan, ensemble_weighted, load_model, make_group_kfold,
    median_aggregate, predict_model, run_cv_predict,
)
from .gbdt import GbdtConfig
from .manifest import (
    NEURAL_SUBSTITUTION, build_manifest, read_predictions, write_manifest, write_predictions,
)
from .metrics import feature_correlation_report, mae, spearman_src
from .mftm import CANONICAL_ORDER, TransformConfig, TransformState, assemble_features
from .neuro import MlpConfig
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("smpop")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- config plumbing

def _load_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    obj = yaml.safe_load(text) or {}
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config must be a key-value mapping")
    return obj


def _opt(args, cfg: dict, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _require(args, cfg, name):
    v = _opt(args, cfg, name)
    if v is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return v


def _dataclass_from(cls, section, overrides=None):
    section = dict(section or {})
    section.update({k: v for k, v in (overrides or {}).items() if v is not None})
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    if "hidden" in section:
        section["hidden"] = tuple(section["hidden"])
    if "geo_resolutions" in section:
        section["geo_resolutions"] = tuple(float(r) for r in section["geo_resolutions"])
    if "extra_numeric" in section:
        section["extra_numeric"] = tuple(section["extra_numeric"])
    return cls(**section)


def _blocks(value) -> tuple[str, ...]:
    if value is None or value == "all":
        return CANONICAL_ORDER
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    items = [s.strip() for s in items if s.strip()]
    if items == ["all"]:
        return CANONICAL_ORDER
    unknown = set(items) - set(CANONICAL_ORDER)
    if unknown:
        raise UsageError(f"unknown block tags {sorted(unknown)}")
    return tuple(t for t in CANONICAL_ORDER if t in items)


def _model_cfgs(args, cfg):
    gbdt = _dataclass_from(GbdtConfig, cfg.get("gbdt"), {"num_trees": getattr(args, "num_trees", None),
                                                         "seed": getattr(args, "model_seed", None)})
    mlp = _dataclass_from(MlpConfig, cfg.get("mlp"), {"epochs": getattr(args, "epochs", None),
                                                      "seed": getattr(args, "model_seed", None)})
    return gbdt, mlp


def _plan(train, args, cfg) -> GroupFoldPlan:
    return make_group_kfold(train, int(_opt(args, cfg, "k", DEFAULT_K)),
                            seed=int(_opt(args, cfg, "seed", 0)),
                            shuffle=bool(_opt(args, cfg, "shuffle", False)))


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg):
    section = cfg.get("synth", {k: v for k, v in cfg.items() if k not in ("out",)})
    overrides = {"seed": args.seed, "sigma": args.sigma, "n_users": args.n_users}
    section = dict(section)
    section.update({k: v for k, v in overrides.items() if v is not None})
    synth = SynthConfig.from_mapping(section)
    out = Path(_require(args, cfg, "out"))
    manifest = generate_synthetic(synth, out)
    print(f"wrote {manifest['n_train_posts']} train / {manifest['n_test_posts']} test posts to {out}")


def cmd_transform(args, cfg):
    train_dir = _require(args, cfg, "train")
    blocks = _blocks(_opt(args, cfg, "blocks"))
    tcfg = _dataclass_from(TransformConfig, cfg.get("transform"))
    state_out = Path(_require(args, cfg, "state_out"))
    matrix, state = assemble_features(load_data_dir(train_dir), None, blocks, tcfg)
    state_out.write_text(state.dumps())
    outputs = [str(state_out)]
    matrix_out = _opt(args, cfg, "matrix_out")
    if matrix_out:
        matrix.to_csv(matrix_out)
        outputs.append(str(matrix_out))
    write_manifest(state_out.with_name(state_out.name + ".manifest.json"), build_manifest(
        "transform", {"train": train_dir}, blocks=list(blocks), transform_config=tcfg.to_json(),
        block_widths=matrix.schema.widths(), n_columns=matrix.shape[1], outputs=outputs))
    print(f"fitted {len(blocks)} blocks, {matrix.shape[1]} columns -> {state_out}")


def cmd_train(args, cfg):
    train_dir = _require(args, cfg, "train")
    test_dir = _require(args, cfg, "test")
    kind = _require(args, cfg, "model")
    if kind not in ("gbdt", "mlp"):
        raise UsageError("--model must be gbdt or mlp")
    blocks = _blocks(_opt(args, cfg, "blocks"))
    out = Path(_require(args, cfg, "out"))
    threads = int(_opt(args, cfg, "threads", 1))
    gbdt_cfg, mlp_cfg = _model_cfgs(args, cfg)
    tcfg = _dataclass_from(TransformConfig, cfg.get("transform"))
    train, test = load_data_dir(train_dir), load_data_dir(test_dir)
    plan = _plan(train, args, cfg)
    model_cfg = gbdt_cfg if kind == "gbdt" else mlp_cfg
    res = run_cv_predict(train, test, plan, kind, model_cfg, blocks, tcfg, threads)

    out.mkdir(parents=True, exist_ok=True)
    for f, (model, state) in enumerate(zip(res.models, res.states)):
        (out / f"fold{f}.smpm").write_text(model.dumps())
        (out / f"fold{f}.state.json").write_text(state.dumps())
    (out / "plan.json").write_text(json.dumps(plan.to_json(), sort_keys=True))
    write_predictions(out / "predictions.csv", res.prediction.pids, res.prediction.aggregated)
    with open(out / "fold_metrics.csv", "w", encoding="utf-8") as fh:
        fh.write("fold,n_train,n_val,src,mae\n")
        for m in res.fold_metrics:
            fh.write(f"{m.fold},{m.n_train},{m.n_val},{m.src!r},{m.mae!r}\n")
    write_manifest(out / "manifest.json", build_manifest(
        "train", {"train": train_dir, "test": test_dir},
        model=kind, model_config=asdict(model_cfg), k=plan.k, plan_digest=plan.digest(),
        fold_seed=int(_opt(args, cfg, "seed", 0)), shuffle=bool(_opt(args, cfg, "shuffle", False)),
        enabled_blocks=list(blocks), transform_config=tcfg.to_json(),
        block_widths=[s.block_widths() for s in res.states],
        aggregation="median over folds",
        fold_metrics=[asdict(m) for m in res.fold_metrics],
        notes=[NEURAL_SUBSTITUTION] if kind == "mlp" else [],
        threads=threads))
    for m in res.fold_metrics:
        print(f"fold {m.fold}: n_train={m.n_train} n_val={m.n_val} src={m.src:.4f} mae={m.mae:.4f}")
    print(f"predictions -> {out / 'predictions.csv'}")


def cmd_predict(args, cfg):
    models_dir = Path(_require(args, cfg, "models"))
    test_dir = _require(args, cfg, "test")
    out = Path(_require(args, cfg, "out"))
    test = load_data_dir(test_dir)
    fold_files = sorted(models_dir.glob("fold*.smpm"), key=lambda p: int(p.stem[4:]))
    if not fold_files:
        raise UsageError(f"no fold*.smpm models in {models_dir}")
    preds = []
    pids = None
    for f in fold_files:
        state = TransformState.loads(f.with_name(f.stem + ".state.json").read_text())
        model = load_model(f.read_text())
        matrix, _ = assemble_features(test, state, state.enabled)
        pids = matrix.pids
        preds.append(predict_model(model, matrix))
    agg = median_aggregate(preds)
    write_predictions(out, pids, agg)
    write_manifest(out.with_name(out.name + ".manifest.json"), build_manifest(
        "predict", {"models": models_dir, "test": test_dir}, n_folds=len(fold_files),
        aggregation="median over folds", outputs=[str(out)]))
    print(f"{len(pids)} predictions from {len(fold_files)} fold models -> {out}")


def cmd_ensemble(args, cfg):
    pa, pb = _require(args, cfg, "pred_a"), _require(args, cfg, "pred_b")
    alpha = float(_opt(args, cfg, "alpha", DEFAULT_ALPHA))
    out = Path(_require(args, cfg, "out"))
    pids_a, a = read_predictions(pa)
    pids_b, b = read_predictions(pb)
    index_b = {p: i for i, p in enumerate(pids_b)}
    if set(pids_a) != set(pids_b):
        raise UsageError("prediction files cover different pids")
    b = b[[index_b[p] for p in pids_a]]
    write_predictions(out, pids_a, ensemble_weighted(a, b, alpha))
    write_manifest(out.with_name(out.name + ".manifest.json"), build_manifest(
        "ensemble", {"pred_a": pa, "pred_b": pb}, alpha=alpha, outputs=[str(out)]))
    print(f"ensemble (alpha={alpha}) -> {out}")


def cmd_evaluate(args, cfg):
    pred_path, labels_path = _require(args, cfg, "pred"), _require(args, cfg, "labels")
    pids, pred = read_predictions(pred_path)
    labels = load_labels(labels_path)
    missing = [p for p in pids if p not in labels]
    if missing:
        raise UsageError(f"{len(missing)} predicted pids have no label (first {missing[0]})")
    y = np.array([labels[p] for p in pids])
    result = {"n": len(pids), "src": spearman_src(y, pred), "mae": mae(y, pred)}
    out = _opt(args, cfg, "out")
    if out:
        write_manifest(out, build_manifest("evaluate", {"pred": pred_path, "labels": labels_path}, **result))
    print(json.dumps(result))


def cmd_correlate(args, cfg):
    train_dir = _require(args, cfg, "train")
    out = Path(_require(args, cfg, "out"))
    ds = load_data_dir(train_dir)
    blocks = [b for b in ("time", "n", "eu") if b != "eu" or ds.profiles]
    matrix, _ = assemble_features(ds, None, blocks)
    report = feature_correlation_report(matrix, ds.labels())
    report.to_csv(out)
    write_manifest(out.with_name(out.name + ".manifest.json"), build_manifest(
        "correlate", {"train": train_dir}, blocks=blocks,
        external_average=report.external_average, other_average=report.other_average,
        outputs=[str(out)]))
    print(report.render())


def _read_subsets(path) -> list[tuple[str, ...]]:
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix.lower() in (".json", ".yaml", ".yml"):
        items = yaml.safe_load(text)
        return [_blocks(s) if s != [] else () for s in items]
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(_blocks(line) if line != "none" else ())
    return out


def cmd_ablate(args, cfg):
    train_dir, test_dir = _require(args, cfg, "train"), _require(args, cfg, "test")
    subsets_path = _require(args, cfg, "subsets")
    out = Path(_require(args, cfg, "out"))
    kinds = tuple(s.strip() for s in str(_opt(args, cfg, "models", "gbdt,mlp,ensemble")).split(","))
    alpha = float(_opt(args, cfg, "alpha", DEFAULT_ALPHA))
    threads = int(_opt(args, cfg, "threads", 1))
    gbdt_cfg, mlp_cfg = _model_cfgs(args, cfg)
    tcfg = _dataclass_from(TransformConfig, cfg.get("transform"))
    subsets = _read_subsets(subsets_path)
    train, test = load_data_dir(train_dir), load_data_dir(test_dir)
    plan = _plan(train, args, cfg)
    rows = run_ablation(train, test, plan, {"gbdt": gbdt_cfg, "mlp": mlp_cfg}, subsets, kinds,
                        alpha, tcfg, threads)
    write_ablation_csv(out, rows)
    write_manifest(out.with_name(out.name + ".manifest.json"), build_manifest(
        "ablate", {"train": train_dir, "test": test_dir, "subsets": subsets_path},
        k=plan.k, plan_digest=plan.digest(), alpha=alpha, models=list(kinds),
        gbdt_config=asdict(gbdt_cfg), mlp_config=asdict(mlp_cfg), transform_config=tcfg.to_json(),
        rows=[{"blocks": list(r.blocks), "model": r.model, "src": r.src, "mae": r.mae} for r in rows],
        notes=[NEURAL_SUBSTITUTION], outputs=[str(out)]))
    print(render_ablation(rows))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smp", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="YAML/JSON config file; flags override it")
        sp.set_defaults(func=fn)
        return sp

    def cv_flags(sp):
        sp.add_argument("--k", type=int)
        sp.add_argument("--seed", type=int, help="fold-plan seed (only used with --shuffle)")
        sp.add_argument("--shuffle", action="store_true", default=None)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--num-trees", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--model-seed", type=int)

    sp = command("synth", cmd_synth, "generate a seeded synthetic dataset")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--n-users", type=int)

    sp = command("transform", cmd_transform, "fit the feature transform on a training directory")
    sp.add_argument("--train")
    sp.add_argument("--blocks")
    sp.add_argument("--state-out")
    sp.add_argument("--matrix-out")

    sp = command("train", cmd_train, "grouped k-fold training and median-of-folds test prediction")
    sp.add_argument("--train")
    sp.add_argument("--test")
    sp.add_argument("--model", choices=("gbdt", "mlp"))
    sp.add_argument("--blocks")
    sp.add_argument("--out", help="output directory")
    cv_flags(sp)

    sp = command("predict", cmd_predict, "predict with fold models written by train")
    sp.add_argument("--models", help="directory written by train")
    sp.add_argument("--test")
    sp.add_argument("--out")

    sp = command("ensemble", cmd_ensemble, "weighted average of two prediction files")
    sp.add_argument("--pred-a")
    sp.add_argument("--pred-b")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--out")

    sp = command("evaluate", cmd_evaluate, "SRC and MAE of predictions against labels")
    sp.add_argument("--pred")
    sp.add_argument("--labels")
    sp.add_argument("--out")

    sp = command("correlate", cmd_correlate, "|SRC| of each numeric feature against the label")
    sp.add_argument("--train")
    sp.add_argument("--out")

    sp = command("ablate", cmd_ablate, "SRC/MAE over feature-block subsets")
    sp.add_argument("--train")
    sp.add_argument("--test")
    sp.add_argument("--subsets")
    sp.add_argument("--out")
    sp.add_argument("--models", help="comma list of gbdt, mlp, ensemble")
    sp.add_argument("--alpha", type=float)
    cv_flags(sp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        args.func(args, cfg)
    except (UsageError, DataError, ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = str(exc).replace("\n", " ")
        print(json.dumps({"error": type(exc).__name__, "message": msg}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
