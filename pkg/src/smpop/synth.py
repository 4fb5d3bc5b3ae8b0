"""Seeded synthetic posts/profiles/embeddings with a planted popularity signal.

Label of a post::

    beta_follower * log(1 + follower)
    + beta_hour * sin(2 pi hour / 24)
    + beta_embed * <embedding, u>
    + Normal(0, sigma)

where ``u`` is a unit direction of the ``signal_block`` embedding space.
Embeddings have a decaying spectrum along a random orthonormal basis whose
first axis is ``u``, so ``<embedding, u>`` has unit variance and is the
block's leading principal direction.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .data import EmbeddingBlock, PostRecord, UserProfile, write_data_dir

_START_TS = 1420070400  # 2015-01-01T00:00:00Z
_SPAN = 2 * 365 * 86400
_CITIES = (
    (40.71, -74.01), (51.51, -0.13), (48.86, 2.35), (35.68, 139.69), (-33.87, 151.21),
    (37.77, -122.42), (52.52, 13.40), (41.90, 12.50), (55.75, 37.62), (-22.91, -43.17),
    (1.35, 103.82), (19.43, -99.13),
)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 500
    posts_per_user: tuple[int, int] = (4, 10)
    embedding_dims: Mapping[str, int] = field(default_factory=lambda: {
        "cap": 32, "image": 32, "single_lang": 16, "multi_lang": 16, "m": 16})
    signal_block: str = "image"
    beta_follower: float = 1.0
    beta_hour: float = 0.3
    beta_embed: float = 0.5
    sigma: float = 0.5
    test_fraction: float = 0.2
    profile_missing_rate: float = 0.02
    geo_missing_rate: float = 0.3
    embedding_missing_rate: float = 0.02
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "posts_per_user", tuple(int(v) for v in self.posts_per_user))
        object.__setattr__(self, "embedding_dims", dict(self.embedding_dims))
        lo, hi = self.posts_per_user
        if self.n_users < 2 or not 1 <= lo <= hi:
            raise ValueError("need n_users >= 2 and 1 <= posts_per_user[0] <= posts_per_user[1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        for b in (self.beta_follower, self.beta_hour, self.beta_embed):
            if not math.isfinite(b):
                raise ValueError("signal weights must be finite")
        if self.signal_block not in self.embedding_dims:
            raise ValueError(f"signal block {self.signal_block!r} has no embedding dim")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "SynthConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown synth config keys {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        d = asdict(self)
        d["posts_per_user"] = list(self.posts_per_user)
        return d


@dataclass(eq=False)
class SyntheticData:
    train_posts: list[PostRecord]
    test_posts: list[PostRecord]
    profiles: dict[str, UserProfile]
    blocks: list[EmbeddingBlock]
    direction: np.ndarray
    test_uids: list[str]


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def _counter(x) -> int:
    return int(max(0, round(float(x))))


def make_synthetic(cfg: SynthConfig) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed)
    uids = [f"u{i:05d}" for i in range(cfg.n_users)]
    lo, hi = cfg.posts_per_user

    categories = [f"cat{i}" for i in range(8)]
    profiles: dict[str, UserProfile] = {}
    follower_of: dict[str, int] = {}
    user_meta = {}
    for uid in uids:
        follower = _counter(_log_uniform(rng, 1.0, 1e6))
        follower_of[uid] = follower
        views = follower * _log_uniform(rng, 5.0, 50.0)
        faves = views * _log_uniform(rng, 0.01, 0.05)
        images = _log_uniform(rng, 10.0, 500.0) * (1.0 + follower) ** 0.25
        profiles[uid] = UserProfile(
            uid,
            follower=follower,
            following=_counter(_log_uniform(rng, 1.0, 5000.0)),
            totalViews=_counter(views),
            totalFaves=_counter(faves),
            totalInGroup=_counter((1.0 + follower) ** 0.5 * _log_uniform(rng, 0.5, 2.0)),
            totalTags=_counter(images * _log_uniform(rng, 1.0, 5.0)),
            totalGeotagged=_counter(images * rng.uniform(0.0, 0.6)),
            totalImages=_counter(images),
        )
        user_meta[uid] = (int(rng.integers(len(_CITIES))), int(rng.integers(len(categories))),
                          bool(rng.random() < cfg.profile_missing_rate))

    n_posts_per = rng.integers(lo, hi + 1, size=cfg.n_users)
    total = int(n_posts_per.sum())
    pids = rng.permutation(np.arange(1, total + 1, dtype=np.uint64) * np.uint64(7919) + np.uint64(10**9))

    # Embeddings: e = Q diag(1/(1+j)) z, signal direction u = Q[:, 0].
    blocks_raw = {}
    direction = None
    for name in sorted(cfg.embedding_dims):
        dim = int(cfg.embedding_dims[name])
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        q = q * np.sign(np.diag(r))
        scales = 1.0 / (1.0 + np.arange(dim))
        z = rng.standard_normal((total, dim))
        vecs = ((z * scales) @ q.T).astype(np.float32)
        keep = rng.random(total) >= cfg.embedding_missing_rate
        blocks_raw[name] = (vecs, keep)
        if name == cfg.signal_block:
            direction = q[:, 0].copy()

    posts: list[PostRecord] = []
    i = 0
    signal_vecs = blocks_raw[cfg.signal_block][0].astype(np.float64)
    for u_idx, uid in enumerate(uids):
        city, cat_idx, _ = user_meta[uid]
        for _ in range(int(n_posts_per[u_idx])):
            ts = _START_TS + int(rng.integers(_SPAN))
            hour = (ts % 86400) // 3600
            if rng.random() < cfg.geo_missing_rate:
                lat = lon = acc = None
            else:
                clat, clon = _CITIES[city]
                lat = float(np.clip(round(clat + 0.2 * rng.standard_normal(), 6), -90, 90))
                lon = float(np.clip(round(clon + 0.2 * rng.standard_normal(), 6), -180, 180))
                acc = float(rng.integers(1, 17))
            cat = categories[cat_idx] if rng.random() < 0.8 else categories[int(rng.integers(8))]
            sub = f"{cat}_sub{int(rng.integers(3))}"
            concept = None if rng.random() < 0.05 else f"concept{int(rng.integers(40))}"
            media = "video" if rng.random() < 0.05 else "photo"
            public = bool(rng.random() < 0.9)
            label = (cfg.beta_follower * math.log1p(follower_of[uid])
                     + cfg.beta_hour * math.sin(2.0 * math.pi * hour / 24.0)
                     + cfg.beta_embed * float(signal_vecs[i] @ direction))
            label += cfg.sigma * float(rng.standard_normal())
            posts.append(PostRecord(uid, int(pids[i]), ts, lat, lon, acc, cat, sub, concept, media,
                                    public, float(label)))
            i += 1

    n_test = max(1, int(round(cfg.test_fraction * cfg.n_users)))
    test_uids = sorted(rng.choice(uids, size=n_test, replace=False).tolist())
    test_set = set(test_uids)
    train_posts = [p for p in posts if p.uid not in test_set]
    test_posts = [p for p in posts if p.uid in test_set]
    for uid, (_, _, missing) in user_meta.items():
        if missing:
            del profiles[uid]

    blocks = []
    all_pids = np.array([p.pid for p in posts], dtype=np.uint64)
    for name in sorted(blocks_raw):
        vecs, keep = blocks_raw[name]
        blocks.append(EmbeddingBlock(name, vecs.shape[1], all_pids[keep], vecs[keep]))
    return SyntheticData(train_posts, test_posts, profiles, blocks, direction, test_uids)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _split_dir(out: Path, posts, data: SyntheticData) -> list[Path]:
    uids = {p.uid for p in posts}
    pids = np.array([p.pid for p in posts], dtype=np.uint64)
    profiles = {u: prof for u, prof in data.profiles.items() if u in uids}
    blocks = []
    for b in data.blocks:
        mask = np.isin(b.pids, pids)
        blocks.append(EmbeddingBlock(b.name, b.dim, b.pids[mask], b.vectors[mask]))
    return write_data_dir(out, posts, profiles, blocks)


def generate_synthetic(cfg: SynthConfig, out_dir) -> dict:
    """Write ``train/`` and ``test/`` data directories plus ``manifest.json``.

    Test users are disjoint from training users. ``test/labels.csv`` holds
    the test labels as ``pid,label``.
    """
    out = Path(out_dir)
    data = make_synthetic(cfg)
    written = _split_dir(out / "train", data.train_posts, data)
    written += _split_dir(out / "test", data.test_posts, data)
    labels = out / "test" / "labels.csv"
    with open(labels, "w", encoding="utf-8") as fh:
        fh.write("pid,label\n")
        for p in data.test_posts:
            fh.write(f"{p.pid},{p.label!r}\n")
    written.append(labels)
    manifest = {
        "command": "synth",
        "config": cfg.to_json(),
        "signal_direction": data.direction.tolist(),
        "signal_block": cfg.signal_block,
        "n_train_posts": len(data.train_posts),
        "n_test_posts": len(data.test_posts),
        "test_uids": data.test_uids,
        "outputs": {str(p.relative_to(out)): _digest(p) for p in written},
    }
    manifest["software_version"] = __version__
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest

