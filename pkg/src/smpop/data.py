"""Ingestion, joining and missing-value handling for post/profile/embedding data.

Three file kinds feed a dataset:

* posts: CSV (or JSONL) with one row per post,
* profiles: CSV of per-user counters,
* embedding blocks: FEMB binary tables (or a CSV fallback) of dense vectors
  keyed by post id.

A data directory bundles them as ``posts.csv|posts.jsonl``, ``profiles.csv``
and ``embeddings/<name>.femb|<name>.csv``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

POST_COLUMNS = (
    "uid", "pid", "timestamp", "latitude", "longitude", "geoaccuracy",
    "category", "subcategory", "concept", "mediatype", "ispublic", "label",
)
PROFILE_COUNTERS = (
    "follower", "following", "totalViews", "totalFaves",
    "totalInGroup", "totalTags", "totalGeotagged", "totalImages",
)
CATEGORICAL_FIELDS = ("category", "subcategory", "concept", "mediatype", "ispublic")
EMBEDDING_TAGS = ("cap", "image", "single_lang", "multi_lang", "m")
UNKNOWN = "unknown"

FEMB_MAGIC = b"FEMB"
FEMB_VERSION = 1
_U64_MAX = 2**64 - 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class PostRecord:
    uid: str
    pid: int
    timestamp: int
    latitude: float | None = None
    longitude: float | None = None
    geoaccuracy: float | None = None
    category: str | None = None
    subcategory: str | None = None
    concept: str | None = None
    mediatype: str | None = None
    ispublic: bool | None = None
    label: float | None = None
    # Extra numeric columns found in the posts file (routed to the f_n block on request).
    extra: Mapping[str, float | None] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.pid <= _U64_MAX:
            raise DataError(f"pid {self.pid} outside unsigned 64-bit range")
        if (self.latitude is None) != (self.longitude is None):
            raise DataError(f"pid {self.pid}: latitude and longitude must be present together")
        if self.latitude is not None:
            if not -90.0 <= self.latitude <= 90.0:
                raise DataError(f"pid {self.pid}: latitude {self.latitude} out of range")
            if not -180.0 <= self.longitude <= 180.0:
                raise DataError(f"pid {self.pid}: longitude {self.longitude} out of range")
        if self.geoaccuracy is not None and not 0 <= self.geoaccuracy <= 16:
            raise DataError(f"pid {self.pid}: geoaccuracy {self.geoaccuracy} outside 0..16")
        if self.label is not None and not math.isfinite(self.label):
            raise DataError(f"pid {self.pid}: label is not finite")

    def field_value(self, name: str):
        if name in self.extra:
            return self.extra[name]
        return getattr(self, name)


@dataclass(frozen=True)
class UserProfile:
    uid: str
    follower: int | None = None
    following: int | None = None
    totalViews: int | None = None
    totalFaves: int | None = None
    totalInGroup: int | None = None
    totalTags: int | None = None
    totalGeotagged: int | None = None
    totalImages: int | None = None

    def __post_init__(self):
        for name in PROFILE_COUNTERS:
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DataError(f"uid {self.uid!r}: negative counter {name}={v}")

    def counters(self) -> tuple:
        return tuple(getattr(self, name) for name in PROFILE_COUNTERS)


@dataclass(frozen=True, eq=False)
class EmbeddingBlock:
    name: str
    dim: int
    pids: np.ndarray  # uint64, shape (count,)
    vectors: np.ndarray  # float32, shape (count, dim)

    def __post_init__(self):
        if self.dim < 1:
            raise DataError(f"block {self.name!r}: dim must be positive")
        pids = np.ascontiguousarray(self.pids, dtype=np.uint64)
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32).reshape(-1, self.dim)
        if vectors.shape[0] != pids.shape[0]:
            raise DataError(f"block {self.name!r}: {pids.shape[0]} pids but {vectors.shape[0]} rows")
        if not np.isfinite(vectors).all():
            raise DataError(f"block {self.name!r}: non-finite component")
        if np.unique(pids).size != pids.size:
            raise DataError(f"block {self.name!r}: duplicate pid")
        pids.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "pids", pids)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return int(self.pids.shape[0])

    def __eq__(self, other):
        if not isinstance(other, EmbeddingBlock):
            return NotImplemented
        return (self.name == other.name and self.dim == other.dim
                and np.array_equal(self.pids, other.pids)
                and self.vectors.tobytes() == other.vectors.tobytes())

    def row_index(self) -> dict[int, int]:
        return {int(p): i for i, p in enumerate(self.pids)}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Posts joined with profiles (by uid) and embedding blocks (by pid).

    ``profile_missing`` and ``embedding_missing`` are per-post boolean flags
    that survive imputation, so the indicator columns can be built from them.
    """

    posts: tuple[PostRecord, ...]
    profiles: Mapping[str, UserProfile]
    blocks: tuple[EmbeddingBlock, ...]
    profile_missing: np.ndarray
    embedding_missing: Mapping[str, np.ndarray]
    imputed: bool = False

    def __len__(self):
        return len(self.posts)

    @property
    def pids(self) -> list[int]:
        return [p.pid for p in self.posts]

    @property
    def uids(self) -> list[str]:
        return [p.uid for p in self.posts]

    def block(self, name: str) -> EmbeddingBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def block_names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.blocks)

    def has_labels(self) -> bool:
        return all(p.label is not None for p in self.posts)

    def labels(self) -> np.ndarray:
        missing = [p.pid for p in self.posts if p.label is None]
        if missing:
            raise DataError(f"{len(missing)} posts have no label (first pid {missing[0]})")
        return np.array([p.label for p in self.posts], dtype=np.float64)

    def subset(self, rows: Iterable[int]) -> "Dataset":
        """Posts at ``rows`` (in the given order); profiles and blocks restricted to them."""
        rows = list(rows)
        posts = tuple(self.posts[i] for i in rows)
        keep_uids = {p.uid for p in posts}
        keep_pids = np.array([p.pid for p in posts], dtype=np.uint64)
        profiles = {u: prof for u, prof in self.profiles.items() if u in keep_uids}
        blocks = []
        for b in self.blocks:
            mask = np.isin(b.pids, keep_pids)
            blocks.append(EmbeddingBlock(b.name, b.dim, b.pids[mask], b.vectors[mask]))
        idx = np.asarray(rows, dtype=np.intp)
        return Dataset(
            posts=posts,
            profiles=profiles,
            blocks=tuple(blocks),
            profile_missing=self.profile_missing[idx].copy(),
            embedding_missing={k: v[idx].copy() for k, v in self.embedding_missing.items()},
            imputed=self.imputed,
        )


# ---------------------------------------------------------------- parsing

def _blank(s) -> bool:
    return s is None or (isinstance(s, str) and s.strip() == "")


def _opt_float(s) -> float | None:
    if _blank(s):
        return None
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {s!r}")
    return v


def _opt_int(s) -> int | None:
    if _blank(s):
        return None
    if isinstance(s, bool):
        raise ValueError(f"expected integer, got {s!r}")
    if isinstance(s, int):
        return s
    if isinstance(s, float):
        if not s.is_integer():
            raise ValueError(f"expected integer, got {s!r}")
        return int(s)
    return int(str(s).strip())


def _opt_str(s) -> str | None:
    if _blank(s):
        return None
    return str(s)


def _opt_bool(s) -> bool | None:
    if _blank(s):
        return None
    if isinstance(s, bool):
        return s
    t = str(s).strip().lower()
    if t in ("1", "true", "t", "yes"):
        return True
    if t in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"expected boolean, got {s!r}")


def _post_from_mapping(row: Mapping) -> PostRecord:
    uid = _opt_str(row.get("uid"))
    if uid is None:
        raise ValueError("uid is required")
    pid = _opt_int(row.get("pid"))
    ts = _opt_int(row.get("timestamp"))
    if pid is None or ts is None:
        raise ValueError("pid and timestamp are required")
    extra = {k: _opt_float(v) for k, v in row.items() if k not in POST_COLUMNS}
    return PostRecord(
        uid=uid,
        pid=pid,
        timestamp=ts,
        latitude=_opt_float(row.get("latitude")),
        longitude=_opt_float(row.get("longitude")),
        geoaccuracy=_opt_float(row.get("geoaccuracy")),
        category=_opt_str(row.get("category")),
        subcategory=_opt_str(row.get("subcategory")),
        concept=_opt_str(row.get("concept")),
        mediatype=_opt_str(row.get("mediatype")),
        ispublic=_opt_bool(row.get("ispublic")),
        label=_opt_float(row.get("label")),
        extra=extra,
    )


def load_posts(path: str | Path, format: str | None = None) -> list[PostRecord]:
    """Read posts from CSV or JSONL, in file order.

    ``format`` is inferred from the suffix when omitted. Rows that fail to
    parse raise :class:`DataError` carrying the 1-based line number.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix.lower() in (".jsonl", ".json") else "csv"
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown posts format {format!r}")

    records: list[PostRecord] = []
    seen: set[int] = set()

    def add(row, line):
        try:
            rec = _post_from_mapping(row)
        except DataError as exc:
            raise DataError(str(exc), path, line) from None
        except (ValueError, TypeError) as exc:
            raise DataError(f"unparseable row: {exc}", path, line) from None
        if rec.pid in seen:
            raise DataError(f"duplicate pid {rec.pid}", path, line)
        seen.add(rec.pid)
        records.append(rec)

    with open(path, newline="", encoding="utf-8") as fh:
        if format == "csv":
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in POST_COLUMNS if c not in header]
            if missing:
                raise DataError(f"posts header lacks columns {missing}", path, 1)
            for row in reader:
                if None in row:
                    raise DataError("row has more fields than the header", path, reader.line_num)
                add(row, reader.line_num)
        else:
            for lineno, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise DataError(f"unparseable row: {exc.msg}", path, lineno) from None
                if not isinstance(obj, dict):
                    raise DataError("unparseable row: expected a JSON object", path, lineno)
                add(obj, lineno)
    return records


def _fmt_float(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_posts(path: str | Path, posts: Sequence[PostRecord], format: str = "csv") -> None:
    extras = sorted({k for p in posts for k in p.extra})
    header = list(POST_COLUMNS) + extras
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if format == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for p in posts:
                w.writerow([_fmt(p.field_value(c)) for c in header])
        elif format == "jsonl":
            for p in posts:
                obj = {c: p.field_value(c) if c in p.extra or c in POST_COLUMNS else None for c in header}
                fh.write(json.dumps(obj) + "\n")
        else:
            raise ValueError(f"unknown posts format {format!r}")


def load_profiles(path: str | Path) -> dict[str, UserProfile]:
    path = Path(path)
    profiles: dict[str, UserProfile] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["uid", *PROFILE_COUNTERS]
        if header is None:
            return profiles
        if [h.strip() for h in header] != expected:
            raise DataError(f"profiles header must be {','.join(expected)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(expected):
                raise DataError(f"expected {len(expected)} fields, got {len(row)}", path, line)
            uid = row[0].strip()
            if not uid:
                raise DataError("empty uid", path, line)
            if uid in profiles:
                raise DataError(f"duplicate uid {uid!r}", path, line)
            try:
                values = [_opt_int(v) for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"unparseable row: {exc}", path, line) from None
            try:
                profiles[uid] = UserProfile(uid, *values)
            except DataError as exc:
                raise DataError(str(exc), path, line) from None
    return profiles


def write_profiles(path: str | Path, profiles: Mapping[str, UserProfile]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["uid", *PROFILE_COUNTERS])
        for uid, prof in profiles.items():
            w.writerow([uid, *(_fmt(v) for v in prof.counters())])


# ---------------------------------------------------------------- FEMB

_FEMB_HEAD = struct.Struct("<4sI")


def write_embedding_block(path: str | Path, block: EmbeddingBlock) -> None:
    """Write ``block`` in the FEMB binary layout (``.csv`` paths get the CSV fallback)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pid", *(f"v{j}" for j in range(block.dim))])
            for pid, vec in zip(block.pids, block.vectors):
                w.writerow([int(pid), *(repr(float(x)) for x in vec)])
        return
    name = block.name.encode("utf-8")
    if len(name) > 255:
        raise DataError("block name longer than 255 bytes")
    rec = np.zeros(len(block), dtype=[("pid", "<u8"), ("vec", "<f4", (block.dim,))])
    rec["pid"] = block.pids
    rec["vec"] = block.vectors
    with open(path, "wb") as fh:
        fh.write(_FEMB_HEAD.pack(FEMB_MAGIC, FEMB_VERSION))
        fh.write(struct.pack("<B", len(name)))
        fh.write(name)
        fh.write(struct.pack("<IQ", block.dim, len(block)))
        fh.write(rec.tobytes())


def _read_femb(path: Path) -> EmbeddingBlock:
    buf = path.read_bytes()
    if len(buf) < _FEMB_HEAD.size or buf[:4] != FEMB_MAGIC:
        raise DataError("bad magic (not a FEMB file)", path)
    _, version = _FEMB_HEAD.unpack_from(buf, 0)
    if version != FEMB_VERSION:
        raise DataError(f"unsupported FEMB version {version}", path)
    off = _FEMB_HEAD.size
    if len(buf) < off + 1:
        raise DataError("truncated header", path)
    nlen = buf[off]
    off += 1
    if len(buf) < off + nlen + 12:
        raise DataError("truncated header", path)
    name = buf[off:off + nlen].decode("utf-8")
    off += nlen
    dim, count = struct.unpack_from("<IQ", buf, off)
    off += 12
    if dim < 1:
        raise DataError("dim must be positive", path)
    dtype = np.dtype([("pid", "<u8"), ("vec", "<f4", (dim,))])
    need = count * dtype.itemsize
    if len(buf) - off < need:
        raise DataError(f"truncated payload: header says {count} records, "
                        f"found {(len(buf) - off) // dtype.itemsize}", path)
    if len(buf) - off > need:
        raise DataError("trailing bytes after payload", path)
    rec = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
    vectors = rec["vec"].astype(np.float32).reshape(count, dim)
    if not np.isfinite(vectors).all():
        bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
        raise DataError(f"non-finite component in record {bad}", path)
    return EmbeddingBlock(name, dim, rec["pid"].astype(np.uint64), vectors)


def _read_embedding_csv(path: Path) -> EmbeddingBlock:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "pid" or len(header) < 2:
            raise DataError("embedding CSV header must be pid,v0,...", path, 1)
        dim = len(header) - 1
        if header[1:] != [f"v{j}" for j in range(dim)]:
            raise DataError("embedding CSV header must be pid,v0,...", path, 1)
        pids, rows = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != dim + 1:
                raise DataError(f"expected {dim + 1} fields", path, reader.line_num)
            try:
                pids.append(int(row[0]))
                vec = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise DataError(f"unparseable row: {exc}", path, reader.line_num) from None
            if not all(math.isfinite(x) for x in vec):
                raise DataError("non-finite component", path, reader.line_num)
            rows.append(vec)
    vectors = np.array(rows, dtype=np.float32).reshape(len(rows), dim)
    return EmbeddingBlock(path.stem, dim, np.array(pids, dtype=np.uint64), vectors)


def load_embedding_block(path: str | Path) -> EmbeddingBlock:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_embedding_csv(path)
    return _read_femb(path)


# ---------------------------------------------------------------- join / impute

def join_dataset(posts: Sequence[PostRecord], profiles: Mapping[str, UserProfile],
                 blocks: Sequence[EmbeddingBlock]) -> Dataset:
    pids = {p.pid for p in posts}
    if len(pids) != len(posts):
        raise DataError("duplicate pid among posts")
    names = [b.name for b in blocks]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate embedding block names {names}")
    emb_missing = {}
    for b in blocks:
        index = b.row_index()
        orphans = [p for p in index if p not in pids]
        if orphans:
            raise DataError(f"block {b.name!r}: orphan pid {orphans[0]} matches no post")
        emb_missing[b.name] = np.array([p.pid not in index for p in posts], dtype=bool)
    prof_missing = np.array([p.uid not in profiles for p in posts], dtype=bool)
    return Dataset(tuple(posts), dict(profiles), tuple(blocks), prof_missing, emb_missing)


@dataclass(frozen=True)
class ImputeStats:
    """Training-split medians for numeric columns and dims of embedding blocks."""

    medians: Mapping[str, float]
    block_dims: Mapping[str, int]

    def median(self, column: str) -> float:
        try:
            return self.medians[column]
        except KeyError:
            raise KeyError(f"column {column!r} absent from fitted impute stats") from None

    def to_json(self) -> dict:
        return {"medians": dict(sorted(self.medians.items())),
                "block_dims": dict(sorted(self.block_dims.items()))}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ImputeStats":
        return cls(dict(obj["medians"]), {k: int(v) for k, v in obj["block_dims"].items()})


def post_numeric_columns(posts: Sequence[PostRecord]) -> list[str]:
    return ["geoaccuracy", *sorted({k for p in posts for k in p.extra})]


def _median(values: list[float]) -> float:
    # Columns with no observed value at all fall back to 0.
    if not values:
        return 0.0
    return float(np.median(np.asarray(values, dtype=np.float64)))


def fit_impute_stats(dataset: Dataset) -> ImputeStats:
    medians = {}
    for col in post_numeric_columns(dataset.posts):
        medians[col] = _median([v for p in dataset.posts if (v := p.field_value(col)) is not None])
    for j, col in enumerate(PROFILE_COUNTERS):
        vals = []
        for p in dataset.posts:
            prof = dataset.profiles.get(p.uid)
            if prof is not None and prof.counters()[j] is not None:
                vals.append(prof.counters()[j])
        medians[col] = _median(vals)
    return ImputeStats(medians, {b.name: b.dim for b in dataset.blocks})


def impute_missing(dataset: Dataset, stats: ImputeStats | None = None) -> tuple[Dataset, ImputeStats]:
    """Fill missing values; fit ``stats`` from ``dataset`` when none are given.

    Numeric fields take the training median, categorical fields the literal
    ``"unknown"`` category, and absent embedding rows a zero vector. The
    missing flags on the dataset are left untouched.
    """
    if stats is None:
        stats = fit_impute_stats(dataset)

    posts = []
    for p in dataset.posts:
        changes = {}
        if p.geoaccuracy is None:
            changes["geoaccuracy"] = stats.median("geoaccuracy")
        for name in ("category", "subcategory", "concept", "mediatype"):
            if getattr(p, name) is None:
                changes[name] = UNKNOWN
        if p.extra and any(v is None for v in p.extra.values()):
            changes["extra"] = {k: stats.median(k) if v is None else v for k, v in p.extra.items()}
        posts.append(replace(p, **changes) if changes else p)

    profiles = dict(dataset.profiles)
    for uid in dict.fromkeys(p.uid for p in dataset.posts):
        prof = profiles.get(uid)
        if prof is None:
            profiles[uid] = UserProfile(uid, *(stats.median(c) for c in PROFILE_COUNTERS))
        elif any(v is None for v in prof.counters()):
            filled = {c: stats.median(c) if getattr(prof, c) is None else getattr(prof, c)
                      for c in PROFILE_COUNTERS}
            profiles[uid] = UserProfile(uid, **filled)

    blocks = []
    pids = np.array([p.pid for p in dataset.posts], dtype=np.uint64)
    for b in dataset.blocks:
        if b.name in stats.block_dims and stats.block_dims[b.name] != b.dim:
            raise DataError(f"block {b.name!r}: dim {b.dim} differs from fitted "
                            f"{stats.block_dims[b.name]}")
        absent = pids[~np.isin(pids, b.pids)]
        if absent.size:
            b = EmbeddingBlock(
                b.name, b.dim,
                np.concatenate([b.pids, absent]),
                np.concatenate([b.vectors, np.zeros((absent.size, b.dim), np.float32)]),
            )
        blocks.append(b)

    out = Dataset(tuple(posts), profiles, tuple(blocks),
                  dataset.profile_missing, dataset.embedding_missing, imputed=True)
    return out, stats


# ---------------------------------------------------------------- directories

def load_data_dir(path: str | Path) -> Dataset:
    """Load and join ``posts``, ``profiles.csv`` and ``embeddings/*`` under ``path``."""
    path = Path(path)
    if (path / "posts.csv").exists():
        posts = load_posts(path / "posts.csv", "csv")
    elif (path / "posts.jsonl").exists():
        posts = load_posts(path / "posts.jsonl", "jsonl")
    else:
        raise DataError("no posts.csv or posts.jsonl", path)
    profiles = load_profiles(path / "profiles.csv") if (path / "profiles.csv").exists() else {}
    blocks = []
    emb_dir = path / "embeddings"
    if emb_dir.is_dir():
        for f in sorted(emb_dir.iterdir()):
            if f.suffix.lower() in (".femb", ".csv"):
                blocks.append(load_embedding_block(f))
    return join_dataset(posts, profiles, blocks)


def write_data_dir(path: str | Path, posts: Sequence[PostRecord],
                   profiles: Mapping[str, UserProfile], blocks: Sequence[EmbeddingBlock]) -> list[Path]:
    path = Path(path)
    (path / "embeddings").mkdir(parents=True, exist_ok=True)
    written = [path / "posts.csv", path / "profiles.csv"]
    write_posts(written[0], posts)
    write_profiles(written[1], profiles)
    for b in blocks:
        f = path / "embeddings" / f"{b.name}.femb"
        write_embedding_block(f, b)
        written.append(f)
    return written


def load_labels(path: str | Path) -> dict[int, float]:
    """Labels keyed by pid, from a ``pid,label`` CSV or a posts file."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        head = fh.readline()
    cols = next(csv.reader(io.StringIO(head)), [])
    if "uid" in cols or path.suffix.lower() == ".jsonl":
        return {p.pid: p.label for p in load_posts(path) if p.label is not None}
    out: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "pid" not in reader.fieldnames:
            raise DataError("labels file needs a pid column", path, 1)
        value_col = "label" if "label" in reader.fieldnames else "prediction"
        if value_col not in reader.fieldnames:
            raise DataError("labels file needs a label column", path, 1)
        for row in reader:
            try:
                pid = int(row["pid"])
                val = float(row[value_col])
            except (TypeError, ValueError) as exc:
                raise DataError(f"unparseable row: {exc}", path, reader.line_num) from None
            if pid in out:
                raise DataError(f"duplicate pid {pid}", path, reader.line_num)
            out[pid] = val
    return out
