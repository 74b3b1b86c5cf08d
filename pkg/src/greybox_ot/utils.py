"""Small shared helpers: canonical JSON, config fingerprints, thread cap."""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np


def canonical_json(obj) -> str:
    """Deterministic JSON encoding (sorted keys, no whitespace drift)."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def fingerprint(obj) -> str:
    """12-hex-digit digest of a config mapping; keys run directories."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:12]


def get_threads() -> int:
    """Worker-thread cap from GREYBOX_OT_THREADS (default 1)."""
    raw = os.environ.get("GREYBOX_OT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
