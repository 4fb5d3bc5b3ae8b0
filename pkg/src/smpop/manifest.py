"""Run manifests, prediction files and input digests."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__

NEURAL_SUBSTITUTION = ("neural ensemble member is a feedforward ReLU regressor trained with Adam, "
                       "standing in for an attentive tabular network")


def digest_path(path) -> str:
    """sha256 of a file, or of a directory's files (relative names + contents, sorted)."""
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for f in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(str(f.relative_to(path)).encode())
            h.update(hashlib.sha256(f.read_bytes()).digest())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def build_manifest(command: str, inputs: Mapping[str, object] = (), **fields) -> dict:
    out = {
        "command": command,
        "software_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "inputs": {name: {"path": str(p), "sha256": digest_path(p)} for name, p in dict(inputs).items()},
    }
    out.update(fields)
    return out


def write_manifest(path, manifest: Mapping) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_predictions(path, pids: Sequence[int], values) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pid", "prediction"])
        for pid, v in zip(pids, values):
            w.writerow([int(pid), repr(float(v))])


def read_predictions(path) -> tuple[list[int], np.ndarray]:
    pids, vals = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "pid" not in reader.fieldnames:
            raise ValueError(f"{path}: prediction file needs a pid column")
        col = "prediction" if "prediction" in reader.fieldnames else "label"
        if col not in reader.fieldnames:
            raise ValueError(f"{path}: prediction file needs a prediction column")
        for row in reader:
            try:
                pids.append(int(row["pid"]))
                vals.append(float(row[col]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{reader.line_num}: unparseable row: {exc}") from None
    if len(set(pids)) != len(pids):
        raise ValueError(f"{path}: duplicate pid")
    return pids, np.asarray(vals, dtype=np.float64)
