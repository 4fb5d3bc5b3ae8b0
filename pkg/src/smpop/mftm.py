"""Multi-modal feature transformation: per-domain blocks aggregated into one matrix.

Block order is fixed (``CANONICAL_ORDER``) and every block occupies a
contiguous column range recorded in a :class:`BlockSchema`, which is what
makes ablations a matter of column selection.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import (
    CATEGORICAL_FIELDS, EMBEDDING_TAGS, PROFILE_COUNTERS, UNKNOWN,
    Dataset, EmbeddingBlock, ImputeStats, impute_missing,
)
from .numlin import PCAModel, fit_pca, transform_pca

CANONICAL_ORDER = ("cap", "image", "time", "geo", "n", "eu", "single_lang", "multi_lang", "cat", "m")
TIME_FIELDS = ("year", "month", "day", "weekday", "hour")
STATE_VERSION = 1


class FeatureError(ValueError):
    pass


# ---------------------------------------------------------------- scalar transforms

def _civil_from_days(z: int) -> tuple[int, int, int]:
    # Days since 1970-01-01 -> proleptic Gregorian (y, m, d); exact for any integer.
    z += 719468
    era = z // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + 3 if mp < 10 else mp - 9
    return y + (m <= 2), m, d


def decompose_timestamp(ts: int) -> tuple[int, int, int, int, int]:
    """UTC (year, month, day, weekday with Monday=0, hour) of a Unix timestamp."""
    ts = int(ts)
    days, secs = divmod(ts, 86400)
    y, m, d = _civil_from_days(days)
    return y, m, d, (days + 3) % 7, secs // 3600


def bucket_geo(lat: float, lon: float, resolution: float) -> str:
    """Grid cell id for a coordinate; the top/right edges fold into the last cell."""
    if resolution <= 0:
        raise FeatureError("resolution must be positive")
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise FeatureError(f"coordinate ({lat}, {lon}) out of range")
    n_lat = math.ceil(180.0 / resolution)
    n_lon = math.ceil(360.0 / resolution)
    i = min(int(math.floor((lat + 90.0) / resolution)), n_lat - 1)
    j = min(int(math.floor((lon + 180.0) / resolution)), n_lon - 1)
    return f"g{i}_{j}"


@dataclass(frozen=True)
class CategoryMap:
    """One-hot layout: slot 0 is ``unknown``, then known categories in sorted order."""

    categories: tuple[str, ...]

    @property
    def width(self) -> int:
        return len(self.categories) + 1

    def index(self, value: str | None) -> int:
        if value is None:
            return 0
        try:
            return self._lookup[value]
        except KeyError:
            return 0

    @property
    def _lookup(self) -> dict[str, int]:
        cache = self.__dict__.get("_cache")
        if cache is None:
            cache = {c: i + 1 for i, c in enumerate(self.categories)}
            object.__setattr__(self, "_cache", cache)
        return cache


def fit_one_hot(column: Iterable[str | None]) -> CategoryMap:
    return CategoryMap(tuple(sorted({v for v in column if v is not None and v != UNKNOWN})))


def apply_one_hot(cmap: CategoryMap, value: str | None) -> np.ndarray:
    out = np.zeros(cmap.width)
    out[cmap.index(value)] = 1.0
    return out


def fit_standardize(column: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(column, dtype=np.float64)
    if x.size == 0:
        raise FeatureError("cannot standardize an empty column")
    mean = float(x.mean())
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    if not std >= 1e-12:
        std = 1.0
    return mean, std


def apply_standardize(mean: float, std: float, x):
    return (np.asarray(x, dtype=np.float64) - mean) / std


def pca_width(model: PCAModel, target: float = 0.95, max_dims: int = 64) -> int:
    """Smallest component count whose cumulative explained variance reaches ``target``."""
    cum = np.cumsum(model.explained_ratio)
    hit = np.flatnonzero(cum >= target)
    c = int(hit[0]) + 1 if hit.size else 1
    return max(1, min(c, max_dims, model.n_components))


def reduce_embedding_block(block: EmbeddingBlock, pca: PCAModel | None = None,
                           target: float = 0.95, max_dims: int = 64,
                           fit_rows: np.ndarray | None = None):
    """Project ``block`` onto its leading principal directions.

    With ``pca=None`` a model is fitted (on ``fit_rows`` of the block when
    given) and truncated to the width rule; otherwise the given model's
    components are used as stored. Returns ``(columns, model)``.
    """
    X = block.vectors.astype(np.float64)
    if pca is None:
        F = X if fit_rows is None else X[fit_rows]
        if F.shape[0] < 2:
            raise FeatureError(f"block {block.name!r}: PCA needs at least 2 training rows")
        full = fit_pca(F)
        pca = full.truncated(pca_width(full, target, max_dims))
    return transform_pca(pca, X), pca


# ---------------------------------------------------------------- matrix types

@dataclass(frozen=True)
class BlockSchema:
    blocks: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        pos = 0
        names = set()
        for name, start, width in self.blocks:
            if start != pos or width < 1:
                raise FeatureError(f"block {name!r} breaks contiguity")
            if name in names:
                raise FeatureError(f"duplicate block {name!r}")
            names.add(name)
            pos += width
        object.__setattr__(self, "blocks", tuple(tuple(b) for b in self.blocks))

    @property
    def width(self) -> int:
        return sum(w for _, _, w in self.blocks)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _, _ in self.blocks)

    def span(self, name: str) -> slice:
        for n, s, w in self.blocks:
            if n == name:
                return slice(s, s + w)
        raise KeyError(name)

    def widths(self) -> dict[str, int]:
        return {n: w for n, _, w in self.blocks}


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    schema: BlockSchema
    pids: tuple[int, ...]
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.pids) or v.shape[1] != self.schema.width:
            raise FeatureError(f"matrix shape {v.shape} disagrees with "
                               f"{len(self.pids)} pids / width {self.schema.width}")
        if not np.isfinite(v).all():
            raise FeatureError("feature matrix has non-finite entries")
        if self.columns and len(self.columns) != v.shape[1]:
            raise FeatureError("column names disagree with width")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pid", *self.columns])
            for pid, row in zip(self.pids, self.values):
                w.writerow([pid, *(repr(float(x)) for x in row)])


def select_blocks(matrix: FeatureMatrix, keep: Iterable[str]) -> FeatureMatrix:
    keep = set(keep)
    unknown = keep - set(matrix.schema.names)
    if unknown:
        raise FeatureError(f"unknown block tags {sorted(unknown)}")
    cols, blocks, names = [], [], []
    pos = 0
    for name, start, width in matrix.schema.blocks:
        if name in keep:
            cols.extend(range(start, start + width))
            blocks.append((name, pos, width))
            if matrix.columns:
                names.extend(matrix.columns[start:start + width])
            pos += width
    return FeatureMatrix(matrix.values[:, cols], BlockSchema(tuple(blocks)), matrix.pids, tuple(names))


# ---------------------------------------------------------------- transform state

@dataclass(frozen=True)
class TransformConfig:
    geo_resolutions: tuple[float, float] = (10.0, 1.0)
    pca_target: float = 0.95
    pca_max_dims: int = 64
    extra_numeric: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"geo_resolutions": list(self.geo_resolutions), "pca_target": self.pca_target,
                "pca_max_dims": self.pca_max_dims, "extra_numeric": list(self.extra_numeric)}


@dataclass(frozen=True, eq=False)
class TransformState:
    """Everything fitted on a training split and needed to transform any other split."""

    enabled: tuple[str, ...]
    config: TransformConfig
    impute: ImputeStats
    category_maps: Mapping[str, CategoryMap] = field(default_factory=dict)
    pca: Mapping[str, PCAModel] = field(default_factory=dict)
    # block -> (means, stds, log1p flags) for the neural input adapter
    scaler: Mapping[str, tuple[tuple[float, ...], tuple[float, ...], tuple[bool, ...]]] = field(
        default_factory=dict)

    def to_json(self) -> dict:
        return {
            "version": STATE_VERSION,
            "order": list(CANONICAL_ORDER),
            "enabled": list(self.enabled),
            "config": self.config.to_json(),
            "impute": self.impute.to_json(),
            "category_maps": {k: list(v.categories) for k, v in sorted(self.category_maps.items())},
            "pca": {k: v.to_json() for k, v in sorted(self.pca.items())},
            "scaler": {k: {"mean": list(m), "std": list(s), "log1p": list(g)}
                       for k, (m, s, g) in sorted(self.scaler.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: Mapping) -> "TransformState":
        if obj.get("version") != STATE_VERSION:
            raise FeatureError(f"unsupported transform state version {obj.get('version')}")
        cfg = obj["config"]
        return cls(
            enabled=tuple(obj["enabled"]),
            config=TransformConfig(tuple(cfg["geo_resolutions"]), cfg["pca_target"],
                                   cfg["pca_max_dims"], tuple(cfg["extra_numeric"])),
            impute=ImputeStats.from_json(obj["impute"]),
            category_maps={k: CategoryMap(tuple(v)) for k, v in obj["category_maps"].items()},
            pca={k: PCAModel.from_json(v) for k, v in obj["pca"].items()},
            scaler={k: (tuple(v["mean"]), tuple(v["std"]), tuple(bool(b) for b in v["log1p"]))
                    for k, v in obj["scaler"].items()},
        )

    @classmethod
    def loads(cls, text: str) -> "TransformState":
        return cls.from_json(json.loads(text))

    def block_widths(self) -> dict[str, int]:
        """Column count of every enabled block, in canonical order."""
        out = {}
        for tag in self.enabled:
            if tag == "time":
                out[tag] = len(TIME_FIELDS)
            elif tag == "geo":
                out[tag] = self.category_maps["geo_coarse"].width + self.category_maps["geo_fine"].width
            elif tag == "n":
                out[tag] = 1 + len(self.config.extra_numeric)
            elif tag == "eu":
                out[tag] = len(PROFILE_COUNTERS) + 1
            elif tag == "cat":
                out[tag] = sum(self.category_maps[f].width for f in CATEGORICAL_FIELDS)
            else:
                out[tag] = self.pca[tag].n_components + 1
        return out

    def scaler_arrays(self, schema: BlockSchema) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-column (mean, std, log1p flag) for ``schema``; identity for unscaled blocks."""
        mean = np.zeros(schema.width)
        std = np.ones(schema.width)
        log = np.zeros(schema.width, dtype=bool)
        for name, start, width in schema.blocks:
            if name in self.scaler:
                m, s, g = self.scaler[name]
                mean[start:start + width] = m
                std[start:start + width] = s
                log[start:start + width] = g
        return mean, std, log


# Blocks whose columns get z-scored on the neural model's input path.
SCALED_BLOCKS = ("time", "n", "eu", *EMBEDDING_TAGS)


def _log_flags(name: str, width: int) -> tuple[bool, ...]:
    # Profile counters span orders of magnitude; they are log1p-compressed before z-scoring.
    if name == "eu":
        return (True,) * len(PROFILE_COUNTERS) + (False,) * (width - len(PROFILE_COUNTERS))
    return (False,) * width


def _categorical(post, name: str) -> str | None:
    v = getattr(post, name)
    if name == "ispublic" and v is not None:
        return "true" if v else "false"
    return v


def _geo_cells(dataset: Dataset, res: float) -> list[str]:
    return [UNKNOWN if p.latitude is None else bucket_geo(p.latitude, p.longitude, res)
            for p in dataset.posts]


def _check_sources(dataset: Dataset, enabled: Sequence[str]) -> None:
    for tag in enabled:
        if tag in EMBEDDING_TAGS and tag not in dataset.block_names:
            raise FeatureError(f"block {tag!r} enabled but the dataset has no such embedding block")
        if tag == "eu" and not dataset.profiles:
            raise FeatureError("block 'eu' enabled but the dataset has no user profiles")


def assemble_features(dataset: Dataset, state: TransformState | None, enabled_blocks: Iterable[str],
                      config: TransformConfig | None = None) -> tuple[FeatureMatrix, TransformState]:
    """Build the aggregated feature matrix for ``enabled_blocks``.

    With ``state=None`` everything (imputation medians, category maps, PCA
    bases, scaler) is fitted on ``dataset``, which must then be a training
    split. Given a state, ``dataset`` is only read, never fitted on.
    """
    enabled_set = set(enabled_blocks)
    unknown = enabled_set - set(CANONICAL_ORDER)
    if unknown:
        raise FeatureError(f"unknown block tags {sorted(unknown)}")
    enabled = tuple(t for t in CANONICAL_ORDER if t in enabled_set)
    fitting = state is None
    if not fitting:
        missing = set(enabled) - set(state.enabled)
        if missing:
            raise FeatureError(f"state was fitted without blocks {sorted(missing)}")
        config = state.config
    elif config is None:
        config = TransformConfig()
    _check_sources(dataset, enabled)

    ds, impute = impute_missing(dataset, None if fitting else state.impute)
    n = len(ds)
    cmaps: dict[str, CategoryMap] = {} if fitting else dict(state.category_maps)
    pcas: dict[str, PCAModel] = {} if fitting else dict(state.pca)

    parts: list[np.ndarray] = []
    schema: list[tuple[str, int, int]] = []
    columns: list[str] = []

    def one_hot(key: str, values: list[str | None]) -> tuple[np.ndarray, list[str]]:
        if fitting:
            cmaps[key] = fit_one_hot(values)
        cm = cmaps[key]
        out = np.zeros((n, cm.width))
        out[np.arange(n), [cm.index(v) for v in values]] = 1.0
        return out, [f"{key}={c}" for c in (UNKNOWN, *cm.categories)]

    for tag in enabled:
        if tag == "time":
            block = np.array([decompose_timestamp(p.timestamp) for p in ds.posts],
                             dtype=np.float64).reshape(n, 5)
            names = list(TIME_FIELDS)
        elif tag == "geo":
            pieces, names = [], []
            for label, res in zip(("coarse", "fine"), config.geo_resolutions):
                arr, nm = one_hot(f"geo_{label}", _geo_cells(ds, res))
                pieces.append(arr)
                names += nm
            block = np.hstack(pieces)
        elif tag == "n":
            cols = ["geoaccuracy", *config.extra_numeric]
            block = np.array([[p.field_value(c) if c == "geoaccuracy" or c in p.extra
                               else impute.median(c) for c in cols] for p in ds.posts],
                             dtype=np.float64).reshape(n, len(cols))
            names = cols
        elif tag == "eu":
            counters = np.array([ds.profiles[p.uid].counters() for p in ds.posts],
                                dtype=np.float64).reshape(n, len(PROFILE_COUNTERS))
            block = np.hstack([counters, ds.profile_missing.astype(np.float64)[:, None]])
            names = [*PROFILE_COUNTERS, "profile_missing"]
        elif tag == "cat":
            pieces, names = [], []
            for fname in CATEGORICAL_FIELDS:
                arr, nm = one_hot(fname, [_categorical(p, fname) for p in ds.posts])
                pieces.append(arr)
                names += nm
            block = np.hstack(pieces)
        else:
            emb = ds.block(tag)
            index = emb.row_index()
            rows = np.array([index[p.pid] for p in ds.posts], dtype=np.intp)
            aligned = EmbeddingBlock(tag, emb.dim, emb.pids[rows], emb.vectors[rows])
            observed = np.flatnonzero(~ds.embedding_missing[tag])
            # Imputed zero rows stay out of the PCA fit unless too few real rows exist.
            fit_rows = observed if observed.size >= 2 else None
            reduced, model = reduce_embedding_block(
                aligned, None if fitting else pcas[tag],
                config.pca_target, config.pca_max_dims, fit_rows)
            pcas[tag] = model
            block = np.hstack([reduced, ds.embedding_missing[tag].astype(np.float64)[:, None]])
            names = [f"pc{j}" for j in range(reduced.shape[1])] + ["missing"]
        schema.append((tag, sum(p.shape[1] for p in parts), block.shape[1]))
        parts.append(block)
        columns += [f"{tag}.{c}" for c in names]

    values = np.hstack(parts) if parts else np.zeros((n, 0))
    matrix = FeatureMatrix(values, BlockSchema(tuple(schema)), tuple(p.pid for p in ds.posts),
                           tuple(columns))
    if fitting:
        scaler = {}
        for name, start, width in schema:
            if name in SCALED_BLOCKS:
                flags = _log_flags(name, width)
                stats = [fit_standardize(np.log1p(values[:, start + j]) if flags[j] else values[:, start + j])
                         for j in range(width)]
                scaler[name] = (tuple(m for m, _ in stats), tuple(s for _, s in stats), flags)
        state = TransformState(enabled, config, impute, cmaps, pcas, scaler)
    return matrix, state
