"""Bit-exact parameter persistence.

A checkpoint is a directory holding ``manifest.json`` (format version,
free-form metadata, and the tensor table) plus ``weights.bin`` (every
tensor's little-endian float64 bytes, concatenated in manifest order).
Tensor names are the parameter tree paths, so loading rebuilds the
exact nested structure.
"""

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .params import tree_insert, tree_leaves

FORMAT_VERSION = 1


def save_checkpoint(path, params, meta=None):
    """Write the parameter tree under directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = []
    blob = bytearray()
    for name, array in tree_leaves(params):
        data = np.ascontiguousarray(array, dtype="<f8")
        tensors.append(
            {"name": name, "shape": list(data.shape), "offset": len(blob)}
        )
        blob += data.tobytes()
    manifest = {
        "formatVersion": FORMAT_VERSION,
        "meta": meta or {},
        "tensors": tensors,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (path / "weights.bin").write_bytes(bytes(blob))


def load_checkpoint(path):
    """Read a checkpoint directory; returns (params, meta)."""
    path = Path(path)
    manifest_file = path / "manifest.json"
    weights_file = path / "weights.bin"
    problems = []
    if not manifest_file.is_file():
        problems.append(f"{manifest_file}: missing")
    if not weights_file.is_file():
        problems.append(f"{weights_file}: missing")
    if problems:
        raise SchemaError(problems)
    manifest = json.loads(manifest_file.read_text())
    if manifest.get("formatVersion") != FORMAT_VERSION:
        raise SchemaError(
            [f"unsupported checkpoint format version {manifest.get('formatVersion')!r}"]
        )
    blob = weights_file.read_bytes()
    params = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        offset = entry["offset"]
        end = offset + 8 * count
        if end > len(blob):
            raise SchemaError(
                [f"tensor {entry['name']}: extends past the end of weights.bin"]
            )
        array = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        tree_insert(params, entry["name"], array.reshape(shape).copy())
    return params, manifest.get("meta", {})
