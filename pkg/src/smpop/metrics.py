"""Evaluation metrics and the per-feature rank-correlation report."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .mftm import FeatureMatrix


def fractional_ranks(x) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # Start index of each run of equal values in sorted order.
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def _check_pair(a, b, min_len: int):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise ValueError(f"need at least {min_len} values, got {a.size}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite entries")
    return a, b


def spearman_src(s, s_hat, with_flag: bool = False):
    """Spearman's rho: Pearson correlation of the fractional rank vectors.

    A constant input has no rank variance; the result is then 0 and, with
    ``with_flag=True``, the second return value reports the degeneracy.
    """
    s, s_hat = _check_pair(s, s_hat, 2)
    rs = fractional_ranks(s)
    rp = fractional_ranks(s_hat)
    n = s.size
    ds = rs - rs.mean()
    dp = rp - rp.mean()
    var_s = ds @ ds / (n - 1)
    var_p = dp @ dp / (n - 1)
    if var_s == 0.0 or var_p == 0.0:
        return (0.0, True) if with_flag else 0.0
    rho = (ds @ dp / (n - 1)) / np.sqrt(var_s * var_p)
    rho = float(min(1.0, max(-1.0, rho)))
    return (rho, False) if with_flag else rho


def mae(s, s_hat) -> float:
    s, s_hat = _check_pair(s, s_hat, 1)
    return float(np.mean(np.abs(s_hat - s)))


@dataclass(frozen=True)
class CorrelationRow:
    feature: str
    abs_src: float
    group: str  # "external" or "other"
    degenerate: bool = False


@dataclass(frozen=True)
class CorrelationReport:
    rows: tuple[CorrelationRow, ...]
    external_average: float
    other_average: float

    def rank_of(self, feature: str) -> int:
        for i, r in enumerate(self.rows):
            if r.feature == feature:
                return i + 1
        raise KeyError(feature)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "abs_src"])
            for r in self.rows:
                w.writerow([r.feature, repr(r.abs_src)])

    def render(self) -> str:
        width = max([len(r.feature) for r in self.rows] + [28])
        lines = [f"{'rank':>4}  {'feature':<{width}}  |SRC|"]
        for i, r in enumerate(self.rows, start=1):
            mark = "  (constant)" if r.degenerate else ""
            lines.append(f"{i:>4}  {r.feature:<{width}}  {r.abs_src:.3f}{mark}")
        lines.append(f"{'':>4}  {'Average of external features':<{width}}  {self.external_average:.3f}")
        lines.append(f"{'':>4}  {'Average of other features':<{width}}  {self.other_average:.3f}")
        return "\n".join(lines)


REPORT_BLOCKS = ("time", "n", "eu")


def feature_correlation_report(matrix: FeatureMatrix, labels, external_tags: Iterable[str] = ("eu",),
                               numeric_tags: Sequence[str] = REPORT_BLOCKS) -> CorrelationReport:
    """|Spearman| of each raw numeric column against the labels, best first.

    Columns come from the ``numeric_tags`` blocks present in ``matrix``;
    missing-value indicator columns are left out. Rows are named by the
    column name without its block prefix.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (matrix.shape[0],):
        raise ValueError("one label per matrix row is required")
    external = set(external_tags)
    rows = []
    for name, start, width in matrix.schema.blocks:
        if name not in numeric_tags:
            continue
        for j in range(start, start + width):
            col = matrix.columns[j] if matrix.columns else f"{name}.c{j - start}"
            short = col.split(".", 1)[1]
            if short in ("profile_missing", "missing"):
                continue
            rho, flat = spearman_src(matrix.values[:, j], labels, with_flag=True)
            rows.append(CorrelationRow(short, abs(rho), "external" if name in external else "other", flat))
    if not rows:
        raise ValueError("no numeric columns in scope for the correlation report")
    rows.sort(key=lambda r: (-r.abs_src, r.feature))
    ext = [r.abs_src for r in rows if r.group == "external"]
    oth = [r.abs_src for r in rows if r.group == "other"]
    return CorrelationReport(tuple(rows), float(np.mean(ext)) if ext else 0.0,
                             float(np.mean(oth)) if oth else 0.0)
