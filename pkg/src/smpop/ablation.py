"""Re-run the grouped CV pipeline over feature-block subsets and score each on the test split."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .folds import DEFAULT_ALPHA, GroupFoldPlan, cv_from_folds, ensemble_weighted, prepare_folds
from .metrics import mae, spearman_src
from .mftm import CANONICAL_ORDER, TransformConfig

MODEL_KINDS = ("gbdt", "mlp", "ensemble")


@dataclass(frozen=True)
class AblationRow:
    blocks: tuple[str, ...]
    model: str
    src: float
    mae: float
    manifest: Mapping | None = None


def _canonical(subset: Iterable[str]) -> tuple[str, ...]:
    subset = set(subset)
    unknown = subset - set(CANONICAL_ORDER)
    if unknown:
        raise ValueError(f"unknown block tags {sorted(unknown)}")
    return tuple(t for t in CANONICAL_ORDER if t in subset)


def run_ablation(train: Dataset, test: Dataset, plan: GroupFoldPlan, configs: Mapping[str, object],
                 block_subsets: Sequence[Iterable[str]], model_kinds: Sequence[str] | None = None,
                 alpha: float = DEFAULT_ALPHA, transform_config: TransformConfig | None = None,
                 threads: int = 1) -> list[AblationRow]:
    """One row per (subset, model kind), subset-major in input order.

    The transform state of each fold is fitted once for the union of all
    subsets; each subset then trains on its selected columns.
    """
    subsets = [_canonical(s) for s in block_subsets]
    kinds = tuple(model_kinds) if model_kinds is not None else tuple(k for k in ("gbdt", "mlp") if k in configs)
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad:
        raise ValueError(f"unknown model kinds {bad}")
    y_test = test.labels()
    union = _canonical(t for s in subsets for t in s)
    folds = prepare_folds(train, test, plan, union, transform_config, threads)

    rows = []
    for subset in subsets:
        preds: dict[str, np.ndarray] = {}
        needed = set(kinds)
        if "ensemble" in needed:
            needed |= {"gbdt", "mlp"}
        for kind in ("gbdt", "mlp"):
            if kind in needed:
                preds[kind] = cv_from_folds(folds, kind, configs.get(kind), subset, threads).prediction.aggregated
        if "ensemble" in needed:
            preds["ensemble"] = ensemble_weighted(preds["gbdt"], preds["mlp"], alpha)
        for kind in kinds:
            manifest = {
                "blocks": list(subset),
                "model": kind,
                "k": plan.k,
                "plan_digest": plan.digest(),
                "alpha": alpha if kind == "ensemble" else None,
            }
            rows.append(AblationRow(subset, kind, spearman_src(y_test, preds[kind]),
                                    mae(y_test, preds[kind]), manifest))
    return rows


def write_ablation_csv(path, rows: Sequence[AblationRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["blocks", "model", "src", "mae"])
        for r in rows:
            w.writerow(["+".join(r.blocks), r.model, repr(r.src), repr(r.mae)])


def render_ablation(rows: Sequence[AblationRow]) -> str:
    width = max([len("+".join(r.blocks)) for r in rows] + [6])
    out = [f"{'blocks':<{width}}  {'model':<8}  {'SRC':>6}  {'MAE':>6}"]
    for r in rows:
        out.append(f"{'+'.join(r.blocks):<{width}}  {r.model:<8}  {r.src:6.3f}  {r.mae:6.3f}")
    return "\n".join(out)
