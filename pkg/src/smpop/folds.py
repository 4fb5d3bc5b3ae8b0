"""User-grouped k-fold training, median-of-folds prediction and two-model ensembling."""
from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .gbdt import GbdtConfig, GbdtModel, fit_gbdt, predict_gbdt
from .metrics import mae, spearman_src
from .mftm import (
    CANONICAL_ORDER, FeatureMatrix, TransformConfig, TransformState,
    assemble_features, select_blocks,
)
from .neuro import MlpConfig, MlpModel, fit_mlp, predict_mlp

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.7
DEFAULT_K = 5


class FoldError(RuntimeError):
    def __init__(self, fold: int, message: str):
        super().__init__(f"fold {fold}: {message}")
        self.fold = fold


@dataclass(frozen=True)
class GroupFoldPlan:
    k: int
    assignment: Mapping[str, int]

    def fold_of(self, uid: str) -> int:
        return self.assignment[uid]

    def folds(self) -> list[list[str]]:
        out = [[] for _ in range(self.k)]
        for uid, f in self.assignment.items():
            out[f].append(uid)
        return [sorted(u) for u in out]

    def to_json(self) -> dict:
        return {"k": self.k, "assignment": dict(sorted(self.assignment.items()))}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


def make_group_kfold(dataset: Dataset | Sequence[str], k: int = DEFAULT_K, seed: int = 0,
                     shuffle: bool = False) -> GroupFoldPlan:
    """Assign whole users to folds, balancing post counts greedily.

    Users are visited by descending post count (ties by uid, or by a seeded
    random key when ``shuffle``) and each goes to the fold holding the fewest
    posts so far, lowest index first on ties.
    """
    uids = dataset.uids if isinstance(dataset, Dataset) else list(dataset)
    counts = Counter(uids)
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(counts) < k:
        raise ValueError(f"k={k} exceeds the {len(counts)} distinct uids")
    if shuffle:
        rng = np.random.default_rng(seed)
        names = sorted(counts)
        keys = dict(zip(names, rng.permutation(len(names))))
        order = sorted(counts, key=lambda u: (-counts[u], keys[u]))
    else:
        order = sorted(counts, key=lambda u: (-counts[u], u))
    sizes = [0] * k
    assignment = {}
    for uid in order:
        f = min(range(k), key=lambda i: (sizes[i], i))
        assignment[uid] = f
        sizes[f] += counts[uid]
    return GroupFoldPlan(k, assignment)


def median_aggregate(per_fold) -> np.ndarray:
    """Per-column median of a (k, n) array; even k averages the middle pair."""
    rows = [np.asarray(r, dtype=np.float64) for r in per_fold]
    if not rows:
        raise ValueError("need at least one fold")
    if len({r.shape for r in rows}) != 1 or rows[0].ndim != 1:
        raise ValueError("ragged per-fold predictions")
    return np.median(np.vstack(rows), axis=0)


def ensemble_weighted(pred_a, pred_b, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    a = np.asarray(pred_a, dtype=np.float64)
    b = np.asarray(pred_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if alpha == 1.0:
        return a.copy()
    if alpha == 0.0:
        return b.copy()
    return alpha * a + (1.0 - alpha) * b


# ---------------------------------------------------------------- per-fold data

@dataclass(eq=False)
class FoldData:
    fold: int
    state: TransformState
    train: FeatureMatrix
    y_train: np.ndarray
    val: FeatureMatrix
    y_val: np.ndarray
    test: FeatureMatrix


def fold_rows(dataset: Dataset, plan: GroupFoldPlan, fold: int) -> tuple[list[int], list[int]]:
    """(training rows, held-out rows) of ``fold``."""
    tr, ho = [], []
    for i, uid in enumerate(dataset.uids):
        try:
            f = plan.assignment[uid]
        except KeyError:
            raise ValueError(f"uid {uid!r} is not covered by the fold plan") from None
        (ho if f == fold else tr).append(i)
    return tr, ho


def prepare_fold(train: Dataset, test: Dataset, plan: GroupFoldPlan, fold: int,
                 blocks: Iterable[str], transform_config: TransformConfig | None = None) -> FoldData:
    tr_rows, ho_rows = fold_rows(train, plan, fold)
    tr = train.subset(tr_rows)
    ho = train.subset(ho_rows)
    try:
        m_train, state = assemble_features(tr, None, blocks, transform_config)
        m_val, _ = assemble_features(ho, state, blocks)
        m_test, _ = assemble_features(test, state, blocks)
    except ValueError as exc:
        raise FoldError(fold, f"transform failed: {exc}") from exc
    return FoldData(fold, state, m_train, tr.labels(), m_val, ho.labels(), m_test)


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def prepare_folds(train: Dataset, test: Dataset, plan: GroupFoldPlan, blocks: Iterable[str],
                  transform_config: TransformConfig | None = None, threads: int = 1) -> list[FoldData]:
    blocks = tuple(blocks)
    return _map(lambda f: prepare_fold(train, test, plan, f, blocks, transform_config),
                range(plan.k), threads)


# ---------------------------------------------------------------- models

def fit_model(kind: str, matrix: FeatureMatrix, y, cfg, state: TransformState):
    if kind == "gbdt":
        return fit_gbdt(matrix.values, y, cfg or GbdtConfig())
    if kind == "mlp":
        mean, std, log = state.scaler_arrays(matrix.schema)
        return fit_mlp(matrix.values, y, cfg or MlpConfig(), mean, std, input_log=log)
    raise ValueError(f"unknown model kind {kind!r}")


def predict_model(model, matrix: FeatureMatrix) -> np.ndarray:
    if isinstance(model, GbdtModel):
        return predict_gbdt(model, matrix.values)
    if isinstance(model, MlpModel):
        return predict_mlp(model, matrix.values)
    raise TypeError(f"not a model: {type(model).__name__}")


def load_model(text: str):
    obj = json.loads(text)
    kind = obj.get("kind")
    if kind == "gbdt":
        return GbdtModel.from_json(obj)
    if kind == "mlp":
        return MlpModel.from_json(obj)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    n_train: int
    n_val: int
    src: float
    mae: float


@dataclass(eq=False)
class CvPrediction:
    per_fold: np.ndarray  # (k, n_test)
    aggregated: np.ndarray  # (n_test,)
    pids: tuple[int, ...]


@dataclass(eq=False)
class CvResult:
    kind: str
    prediction: CvPrediction
    fold_metrics: list[FoldMetrics]
    models: list = field(default_factory=list)
    states: list[TransformState] = field(default_factory=list)
    blocks: tuple[str, ...] = ()


def _min_rows(kind: str, cfg) -> int:
    if kind == "gbdt":
        return (cfg or GbdtConfig()).min_samples_leaf
    return 1


def cv_from_folds(folds: Sequence[FoldData], kind: str, cfg, keep: Iterable[str] | None = None,
                  threads: int = 1) -> CvResult:
    """Train one model per prepared fold, optionally on a subset of blocks."""
    keep = None if keep is None else tuple(keep)

    def run(fd: FoldData):
        def view(m):
            return m if keep is None else select_blocks(m, keep)
        tr, va, te = view(fd.train), view(fd.val), view(fd.test)
        if tr.shape[0] < _min_rows(kind, cfg):
            raise FoldError(fd.fold, f"training portion has {tr.shape[0]} rows, "
                                     f"fewer than min_samples_leaf")
        model = fit_model(kind, tr, fd.y_train, cfg, fd.state)
        val_pred = predict_model(model, va)
        if va.shape[0] >= 2:
            fm = FoldMetrics(fd.fold, tr.shape[0], va.shape[0],
                             spearman_src(fd.y_val, val_pred), mae(fd.y_val, val_pred))
        else:
            fm = FoldMetrics(fd.fold, tr.shape[0], va.shape[0], float("nan"), float("nan"))
        log.debug("fold %d %s: val src=%.4f mae=%.4f", fd.fold, kind, fm.src, fm.mae)
        return model, fm, predict_model(model, te)

    results = _map(run, folds, threads)
    per_fold = np.vstack([r[2] for r in results]) if results else np.zeros((0, 0))
    pred = CvPrediction(per_fold, median_aggregate(per_fold), folds[0].test.pids)
    blocks = keep if keep is not None else folds[0].train.schema.names
    return CvResult(kind, pred, [r[1] for r in results], [r[0] for r in results],
                    [fd.state for fd in folds], tuple(blocks))


def run_cv_predict(train: Dataset, test: Dataset, plan: GroupFoldPlan, model_kind: str, cfg,
                   enabled_blocks: Iterable[str], transform_config: TransformConfig | None = None,
                   threads: int = 1) -> CvResult:
    """Fit transform + model on each fold's training users; median the test predictions."""
    folds = prepare_folds(train, test, plan, enabled_blocks, transform_config, threads)
    return cv_from_folds(folds, model_kind, cfg, threads=threads)


@dataclass(eq=False)
class PipelineResult:
    gbdt: CvResult
    mlp: CvResult
    alpha: float
    ensemble: np.ndarray

    @property
    def pids(self) -> tuple[int, ...]:
        return self.gbdt.prediction.pids


def pipeline_from_folds(folds: Sequence[FoldData], gbdt_cfg: GbdtConfig | None, mlp_cfg: MlpConfig | None,
                        alpha: float = DEFAULT_ALPHA, keep: Iterable[str] | None = None,
                        threads: int = 1) -> PipelineResult:
    # Each member is median-aggregated over folds first, then the two are blended.
    g = cv_from_folds(folds, "gbdt", gbdt_cfg, keep, threads)
    m = cv_from_folds(folds, "mlp", mlp_cfg, keep, threads)
    return PipelineResult(g, m, alpha, ensemble_weighted(g.prediction.aggregated,
                                                         m.prediction.aggregated, alpha))


def run_pipeline(train: Dataset, test: Dataset, plan: GroupFoldPlan, enabled_blocks: Iterable[str] = CANONICAL_ORDER,
                 gbdt_cfg: GbdtConfig | None = None, mlp_cfg: MlpConfig | None = None,
                 alpha: float = DEFAULT_ALPHA, transform_config: TransformConfig | None = None,
                 threads: int = 1) -> PipelineResult:
    folds = prepare_folds(train, test, plan, enabled_blocks, transform_config, threads)
    return pipeline_from_folds(folds, gbdt_cfg, mlp_cfg, alpha, threads=threads)
