"""Checkpoint files: ``<stem>.json`` manifest plus ``<stem>.bin`` little-endian blob."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, state: dict, config_text: str = "", extra: dict | None = None,
                    frozen=()):
    """Write parameters in insertion order; returns the manifest path.

    Names listed in ``frozen`` are stored with ``"trainable": false``.
    """
    frozen = set(frozen)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path = path.with_suffix(".json")
    blob_path = path.with_suffix(".bin")
    entries = []
    offset = 0
    with open(blob_path, "wb") as fh:
        for name, value in state.items():
            arr = np.ascontiguousarray(value)
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = le.tobytes()
            fh.write(raw)
            entries.append({
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.name,
                "offset": offset,
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
                "trainable": name not in frozen,
            })
            offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "blob": blob_path.name,
        "parameters": entries,
        "config": config_text,
    }
    if extra:
        manifest["extra"] = extra
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def load_checkpoint(path):
    """Return ``(state, manifest)``; verifies every per-tensor checksum."""
    manifest_path = Path(path).with_suffix(".json")
    manifest = json.loads(manifest_path.read_text())
    raw = (manifest_path.parent / manifest["blob"]).read_bytes()
    state = {}
    for entry in manifest["parameters"]:
        chunk = raw[entry["offset"]: entry["offset"] + entry["nbytes"]]
        if hashlib.sha256(chunk).hexdigest() != entry["sha256"]:
            raise ValueError(f"checksum mismatch for {entry['name']}")
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        state[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).astype(
            np.dtype(entry["dtype"]))
    return state, manifest


def manifest_param_count(manifest, trainable_only=True) -> int:
    return int(sum(np.prod(e["shape"], dtype=np.int64) for e in manifest["parameters"]
                   if e.get("trainable", True) or not trainable_only))
