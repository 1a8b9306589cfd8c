"""Atomic artifact writes, hashing, and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from pathlib import Path


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary sibling and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(df, path, float_format="%.10g") -> None:
    atomic_write_text(path, df.to_csv(index=False, lineterminator="\n", float_format=float_format))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def versions() -> dict:
    import numpy
    import pandas
    import scipy

    import tacklepep
    out = {"python": platform.python_version(), "numpy": numpy.__version__,
           "pandas": pandas.__version__, "scipy": scipy.__version__,
           "tacklepep": tacklepep.__version__}
    try:
        import xgboost
        out["xgboost"] = xgboost.__version__
    except ImportError:
        pass
    return out


def write_manifest(path, stage: str, config: dict, seed: int, inputs=(), outputs=(), extra=None) -> dict:
    """Record what produced a set of artifacts.

    No timestamps or absolute paths are stored, so identical runs give
    byte-identical manifests.
    """
    def digest(paths):
        return {Path(p).name: file_sha256(p) for p in sorted(paths, key=lambda q: Path(q).name)}

    m = {"stage": stage, "seed": int(seed), "config_hash": config_hash(config),
         "inputs": digest(inputs), "outputs": digest(outputs), "versions": versions()}
    if extra:
        m["extra"] = extra
    atomic_write_text(path, json.dumps(m, indent=2, sort_keys=True) + "\n")
    return m
