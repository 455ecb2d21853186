"""Canonical JSON, hashing and flattening helpers."""

import json
import hashlib
from typing import Any, Dict, Iterable

import numpy as np


def to_jsonable(data: Any) -> Any:
    """Turn numpy scalars/arrays, tuples and sets into plain JSON types, recursively."""
    if isinstance(data, dict):
        return {str(k): to_jsonable(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_jsonable(v) for v in data]
    if isinstance(data, (set, frozenset)):
        return sorted(to_jsonable(v) for v in data)
    if isinstance(data, np.ndarray):
        return to_jsonable(data.tolist())
    if isinstance(data, np.bool_):
        return bool(data)
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, np.floating):
        return float(data)
    return data


def canonical_json(data: Any) -> str:
    """Sorted-key, whitespace-free JSON. Floats use repr, so they round-trip exactly."""
    return json.dumps(to_jsonable(data), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def hash_text(text: str) -> str:
    """SHA-256 hex digest of a string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def hash_json(data: Any) -> str:
    """SHA-256 of the canonical JSON form of ``data``."""
    return hash_text(canonical_json(data))


def hash_file(path: str) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_arrays(arrays: Iterable[np.ndarray]) -> str:
    """SHA-256 over the raw bytes of float64 arrays (weight fingerprints)."""
    digest = hashlib.sha256()
    for array in arrays:
        digest.update(np.ascontiguousarray(array, dtype=np.float64).tobytes())
    return digest.hexdigest()


def flatten_json(data: Dict[str, Any], parent_key: str = "", sep: str = "/") -> Dict[str, Any]:
    """Flatten nested dicts into slash paths: {'a': {'b': 1}} -> {'a/b': 1}."""
    items = []
    for k, v in data.items():
        new_key = parent_key + sep + k if parent_key else k
        if isinstance(v, dict) and v:
            items.extend(flatten_json(v, new_key, sep=sep).items())
        else:
            items.append((new_key, v))
    return dict(items)
