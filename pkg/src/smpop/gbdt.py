"""Histogram-based gradient-boosted regression trees with leaf-wise growth.

Features are quantile-binned once per fit. Each tree is grown best-first:
the leaf whose best split has the largest second-order gain is split next,
until ``max_leaves`` is reached or no split with positive gain remains.
Children histograms use the subtraction trick (build the smaller child,
derive the larger one from the parent).
"""
from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

MODEL_VERSION = 1


@dataclass(frozen=True)
class GbdtConfig:
    num_trees: int = 500
    learning_rate: float = 0.05
    max_leaves: int = 31
    min_samples_leaf: int = 20
    max_bins: int = 255
    l2_reg: float = 1.0
    loss: str = "squared"
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be >= 2")
        if not 2 <= self.max_bins <= 255:
            raise ValueError("max_bins must be in [2, 255]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")
        if self.loss not in ("squared", "absolute"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(eq=False)
class Tree:
    """Flat node arrays; ``left[i] == -1`` marks a leaf.

    Rows go left when their bin is ``<= threshold_bin``, i.e. when the raw
    value is below ``threshold``.
    """

    feature: np.ndarray
    threshold_bin: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left < 0))

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold_bin": self.threshold_bin.tolist(),
            "threshold": self.threshold.tolist(),
            "default_left": self.default_left.astype(int).tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "Tree":
        return cls(
            np.asarray(obj["feature"], dtype=np.int64),
            np.asarray(obj["threshold_bin"], dtype=np.int64),
            np.asarray(obj["threshold"], dtype=np.float64),
            np.asarray(obj["default_left"], dtype=bool),
            np.asarray(obj["left"], dtype=np.int64),
            np.asarray(obj["right"], dtype=np.int64),
            np.asarray(obj["value"], dtype=np.float64),
            np.asarray(obj["n_samples"], dtype=np.int64),
        )


@dataclass(eq=False)
class GbdtModel:
    config: GbdtConfig
    base_score: float
    bin_edges: list[np.ndarray]
    trees: list[Tree] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.bin_edges)

    def to_json(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "kind": "gbdt",
            "config": asdict(self.config),
            "base_score": self.base_score,
            "bin_edges": [e.tolist() for e in self.bin_edges],
            "trees": [t.to_json() for t in self.trees],
            "train_loss": self.train_loss,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> "GbdtModel":
        if obj.get("kind") != "gbdt" or obj.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 gbdt model")
        return cls(
            GbdtConfig(**obj["config"]),
            float(obj["base_score"]),
            [np.asarray(e, dtype=np.float64) for e in obj["bin_edges"]],
            [Tree.from_json(t) for t in obj["trees"]],
            list(obj.get("train_loss", [])),
        )


# ---------------------------------------------------------------- binning

def quantile_bins(column, max_bins: int = 255) -> np.ndarray:
    """Bin edges for one feature column.

    With at most ``max_bins`` distinct values every value gets its own bin
    (edges at midpoints between neighbours). Otherwise the edge for quantile
    ``q = j / max_bins`` is the midpoint of the order statistics at ranks
    ``floor(q n)`` and ``floor(q n) + 1``; repeated edges are dropped.
    """
    x = np.sort(np.asarray(column, dtype=np.float64))
    if x.size == 0:
        raise ValueError("cannot bin an empty column")
    distinct = np.unique(x)
    if distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    n = x.size
    ranks = (np.arange(1, max_bins) * n) // max_bins
    ranks = np.clip(ranks, 1, n - 1)
    edges = (x[ranks - 1] + x[ranks]) / 2.0
    edges = np.unique(edges)
    # An edge equal to the column maximum would leave an empty right side.
    return edges[edges < x[-1]]


def bin_matrix(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    n, F = X.shape
    out = np.empty((n, F), dtype=np.uint8)
    for j in range(F):
        out[:, j] = np.searchsorted(edges[j], X[:, j], side="right")
    return out


# ---------------------------------------------------------------- kernels

@njit(cache=True, nogil=True)
def _build_hist(binned, rows, grad, hess, offsets, total_bins):
    # Flat layout: feature f owns hist[offsets[f]:offsets[f + 1]].
    F = binned.shape[1]
    hist = np.zeros((total_bins, 3))
    for r in rows:
        g = grad[r]
        h = hess[r]
        for f in range(F):
            k = offsets[f] + binned[r, f]
            hist[k, 0] += g
            hist[k, 1] += h
            hist[k, 2] += 1.0
    return hist


@njit(cache=True, nogil=True)
def _best_split(hist, offsets, lam, min_leaf):
    """Scan every (feature, bin) boundary; first best wins on exact ties."""
    F = offsets.shape[0] - 1
    best_gain = 0.0
    best_f = -1
    best_b = -1
    G = 0.0
    H = 0.0
    N = 0.0
    for k in range(offsets[0], offsets[1]):
        G += hist[k, 0]
        H += hist[k, 1]
        N += hist[k, 2]
    parent = G * G / (H + lam)
    for f in range(F):
        gl = 0.0
        hl = 0.0
        nl = 0.0
        lo = offsets[f]
        for b in range(offsets[f + 1] - lo - 1):
            gl += hist[lo + b, 0]
            hl += hist[lo + b, 1]
            nl += hist[lo + b, 2]
            if nl < min_leaf:
                continue
            nr = N - nl
            if nr < min_leaf:
                break
            gr = G - gl
            hr = H - hl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_gain, best_f, best_b


@njit(cache=True, nogil=True)
def _partition(binned, rows, feature, threshold_bin):
    left = np.empty(rows.shape[0], dtype=rows.dtype)
    right = np.empty(rows.shape[0], dtype=rows.dtype)
    nl = 0
    nr = 0
    for r in rows:
        if binned[r, feature] <= threshold_bin:
            left[nl] = r
            nl += 1
        else:
            right[nr] = r
            nr += 1
    return left[:nl], right[:nr]


@njit(cache=True, nogil=True)
def _predict_forest(X, feature, threshold, left, right, value, roots, scale, base):
    n = X.shape[0]
    out = np.full(n, base)
    for i in range(n):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while left[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] += scale * acc
    return out


# ---------------------------------------------------------------- training

def _gradients(loss: str, pred: np.ndarray, y: np.ndarray):
    if loss == "squared":
        return pred - y, np.ones_like(y)
    return np.sign(pred - y), np.ones_like(y)


def _loss(loss: str, pred: np.ndarray, y: np.ndarray) -> float:
    if loss == "squared":
        return float(np.mean((pred - y) ** 2))
    return float(np.mean(np.abs(pred - y)))


def _grow_tree(binned, edges, offsets, grad, hess, cfg: GbdtConfig) -> tuple[Tree, np.ndarray]:
    """Grow one tree; returns the tree and each training row's leaf value."""
    lam = cfg.l2_reg
    total_bins = int(offsets[-1])
    rows0 = np.arange(binned.shape[0], dtype=np.int64)

    feature, thr_bin, left, right, value, count = [], [], [], [], [], []
    node_rows: dict[int, np.ndarray] = {}

    def new_node(rows):
        idx = len(feature)
        feature.append(-1)
        thr_bin.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        count.append(rows.shape[0])
        node_rows[idx] = rows
        return idx

    heap: list[tuple[float, int, int, int, np.ndarray]] = []

    def consider(node, hist):
        if offsets.shape[0] < 2:
            return
        gain, f, b = _best_split(hist, offsets, lam, cfg.min_samples_leaf)
        if f >= 0:
            # Max-heap on gain; node id breaks ties deterministically.
            heapq.heappush(heap, (-gain, node, f, b, hist))

    root = new_node(rows0)
    root_hist = _build_hist(binned, rows0, grad, hess, offsets, total_bins)
    consider(root, root_hist)
    n_leaves = 1
    while heap and n_leaves < cfg.max_leaves:
        _, node, f, b, hist = heapq.heappop(heap)
        lrows, rrows = _partition(binned, node_rows[node], f, b)
        feature[node] = f
        thr_bin[node] = b
        lid = new_node(lrows)
        rid = new_node(rrows)
        left[node] = lid
        right[node] = rid
        del node_rows[node]
        n_leaves += 1
        # Scan the smaller child; the sibling's histogram is parent minus that.
        small = lid if lrows.shape[0] <= rrows.shape[0] else rid
        h_small = _build_hist(binned, node_rows[small], grad, hess, offsets, total_bins)
        h_big = hist - h_small
        consider(lid, h_small if small == lid else h_big)
        consider(rid, h_small if small == rid else h_big)

    leaf_of_row = np.empty(binned.shape[0])
    for node, rows in node_rows.items():
        G = float(np.sum(grad[rows]))
        H = float(np.sum(hess[rows]))
        v = -G / (H + lam) if H + lam > 0 else 0.0
        value[node] = v
        leaf_of_row[rows] = v

    feat = np.asarray(feature, dtype=np.int64)
    tb = np.asarray(thr_bin, dtype=np.int64)
    thr = np.array([edges[f][b] if f >= 0 else 0.0 for f, b in zip(feat, tb)], dtype=np.float64)
    tree = Tree(feat, tb, thr, np.ones(len(feat), dtype=bool), np.asarray(left, dtype=np.int64),
                np.asarray(right, dtype=np.int64), np.asarray(value, dtype=np.float64),
                np.asarray(count, dtype=np.int64))
    return tree, leaf_of_row


def fit_gbdt(X, y, cfg: GbdtConfig | None = None) -> GbdtModel:
    cfg = cfg or GbdtConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not np.isfinite(y).all():
        raise ValueError("non-finite target")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")
    if X.shape[0] < cfg.min_samples_leaf:
        raise ValueError(f"{X.shape[0]} rows is fewer than min_samples_leaf={cfg.min_samples_leaf}")

    edges = [quantile_bins(X[:, j], cfg.max_bins) for j in range(X.shape[1])]
    binned = bin_matrix(X, edges)
    offsets = np.concatenate([[0], np.cumsum([e.size + 1 for e in edges])]).astype(np.int64)

    base = float(np.mean(y))
    model = GbdtModel(cfg, base, edges)
    pred = np.full(y.shape[0], base)
    model.train_loss.append(_loss(cfg.loss, pred, y))
    for _ in range(cfg.num_trees):
        grad, hess = _gradients(cfg.loss, pred, y)
        tree, step = _grow_tree(binned, edges, offsets, grad, hess, cfg)
        model.trees.append(tree)
        pred = pred + cfg.learning_rate * step
        model.train_loss.append(_loss(cfg.loss, pred, y))
    return model


def predict_gbdt(model: GbdtModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns, got shape {X.shape}")
    if not model.trees:
        return np.full(X.shape[0], model.base_score)
    offsets = np.cumsum([0] + [t.feature.size for t in model.trees[:-1]])

    def cat(attr):
        return np.concatenate([getattr(t, attr) for t in model.trees])

    left = cat("left")
    right = cat("right")
    left = np.where(left >= 0, left + np.repeat(offsets, [t.left.size for t in model.trees]), -1)
    right = np.where(right >= 0, right + np.repeat(offsets, [t.right.size for t in model.trees]), -1)
    return _predict_forest(np.ascontiguousarray(X), cat("feature"), cat("threshold"), left, right,
                           cat("value"), offsets.astype(np.int64), model.config.learning_rate,
                           model.base_score)


def gbdt_loss(model: GbdtModel, X, y) -> float:
    return _loss(model.config.loss, predict_gbdt(model, X), np.asarray(y, dtype=np.float64))

