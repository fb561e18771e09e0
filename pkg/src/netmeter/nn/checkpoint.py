"""Checkpoints: a JSON manifest plus a flat little-endian float64 blob.

The manifest lists each model's architecture and its parameters (name,
shape, offset into the blob) in declaration order.  Arbitrary extra
metadata (seeds, normalizer) rides along under ``"extra"``.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .layers import Sequential

MAGIC = "NETMETER-CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _paths(prefix) -> tuple[str, str]:
    prefix = os.fspath(prefix)
    return prefix + ".json", prefix + ".bin"


def save_checkpoint(prefix, models: dict[str, Sequential], extra: dict | None = None) -> None:
    manifest_path, blob_path = _paths(prefix)
    entries = []
    chunks = []
    offset = 0
    for key, model in models.items():
        params = []
        for li, layer in enumerate(model.layers):
            for p in layer.params():
                params.append({"layer": li, "name": p.name, "shape": list(p.data.shape), "offset": offset})
                offset += p.data.size
                chunks.append(np.ascontiguousarray(p.data, dtype="<f8").reshape(-1))
        entries.append({"key": key, "architecture": model.config(), "params": params})
    blob = np.concatenate(chunks).tobytes() if chunks else b""
    manifest = {
        "magic": MAGIC,
        "version": VERSION,
        "dtype": "<f8",
        "n_values": offset,
        "blob": os.path.basename(blob_path),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "models": entries,
        "extra": extra or {},
    }
    with open(blob_path, "wb") as fh:
        fh.write(blob)
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(prefix) -> tuple[dict[str, Sequential], dict]:
    manifest_path, blob_path = _paths(prefix)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("magic") != MAGIC:
        raise CheckpointError(f"{manifest_path}: not a netmeter checkpoint")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{manifest_path}: unsupported version {manifest.get('version')}")
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CheckpointError(f"{blob_path}: checksum mismatch")
    values = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if values.size != manifest["n_values"]:
        raise CheckpointError(f"{blob_path}: expected {manifest['n_values']} values, found {values.size}")
    models = {}
    for entry in manifest["models"]:
        model = Sequential.from_config(entry["architecture"])
        declared = model.params()
        if len(declared) != len(entry["params"]):
            raise CheckpointError(f"model {entry['key']!r}: parameter list does not match architecture")
        for p, rec in zip(declared, entry["params"]):
            if list(p.data.shape) != rec["shape"]:
                raise CheckpointError(f"model {entry['key']!r}: shape mismatch for {rec['name']}")
            n = int(np.prod(rec["shape"]))
            p.data = values[rec["offset"] : rec["offset"] + n].reshape(rec["shape"]).copy()
        models[entry["key"]] = model
    return models, manifest["extra"]
