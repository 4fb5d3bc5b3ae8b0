import numpy as np
import pytest

from smpop.data import EmbeddingBlock, PostRecord, UserProfile, join_dataset
from smpop.synth import SynthConfig, generate_synthetic


def make_posts(n_users=6, per_user=3, seed=0, labels=True):
    rng = np.random.default_rng(seed)
    posts = []
    pid = 1
    for u in range(n_users):
        for _ in range(per_user):
            lat, lon = (float(rng.uniform(-80, 80)), float(rng.uniform(-170, 170))) if pid % 4 else (None, None)
            posts.append(PostRecord(
                uid=f"u{u}", pid=pid, timestamp=int(rng.integers(1_400_000_000, 1_700_000_000)),
                latitude=lat, longitude=lon,
                geoaccuracy=float(rng.integers(0, 17)) if pid % 5 else None,
                category=["a", "b", "c"][pid % 3], subcategory=None if pid % 7 == 0 else f"s{pid % 2}",
                concept="x", mediatype="photo", ispublic=bool(pid % 2),
                label=float(rng.normal(5, 2)) if labels else None))
            pid += 1
    return posts


def make_profiles(uids, seed=0, skip=()):
    rng = np.random.default_rng(seed)
    return {u: UserProfile(u, *(int(v) for v in rng.integers(0, 1000, 8)))
            for u in uids if u not in skip}


def make_block(name, posts, dim=4, seed=0, skip=()):
    rng = np.random.default_rng(seed)
    pids = [p.pid for p in posts if p.pid not in skip]
    return EmbeddingBlock(name, dim, np.array(pids, dtype=np.uint64),
                          rng.normal(size=(len(pids), dim)).astype(np.float32))


def make_dataset(n_users=6, per_user=3, seed=0, blocks=("image",), **kw):
    posts = make_posts(n_users, per_user, seed, **kw)
    uids = sorted({p.uid for p in posts})
    return join_dataset(posts, make_profiles(uids, seed),
                        [make_block(b, posts, seed=seed + i) for i, b in enumerate(blocks)])


@pytest.fixture
def small_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_synth")
    cfg = SynthConfig(n_users=60, sigma=0.0, profile_missing_rate=0.0, embedding_missing_rate=0.0,
                      embedding_dims={"cap": 6, "image": 6, "single_lang": 4, "multi_lang": 4, "m": 4})
    generate_synthetic(cfg, out)
    return out
