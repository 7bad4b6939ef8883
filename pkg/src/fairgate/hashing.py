"""Canonical JSON serialization and content hashing.

Every artifact that participates in content addressing goes through
``canonical_json`` so that identical logical content always produces identical
bytes (sorted keys, no whitespace, shortest-repr floats, NaN/inf rejected).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def jsonable(obj):
    """Coerce numpy scalars/arrays and containers to plain JSON-safe types."""
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_obj(obj) -> str:
    return sha256_hex(canonical_json(obj).encode("utf-8"))


def hash_file(path: str | Path) -> str:
    return sha256_hex(Path(path).read_bytes())
