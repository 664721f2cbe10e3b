"""On-disk array format used for all checkpoints.

A ``.arr`` file is a one-line JSON header ``{"shape": [...], "dtype": "f64",
"byte_order": "little-endian"}`` terminated by a newline, followed by the raw
row-major array bytes. A checkpoint is a directory of ``.arr`` files plus a
``manifest.json`` describing what they are.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {"f64": "<f8", "i64": "<i8"}
_NAMES = {np.dtype(np.float64): "f64", np.dtype(np.int64): "i64"}


def write_array(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _NAMES:
        arr = arr.astype(np.float64)
    header = {
        "shape": list(arr.shape),
        "dtype": _NAMES[arr.dtype],
        "byte_order": "little-endian",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    dtype = np.dtype(_DTYPES[header["dtype"]])
    arr = np.frombuffer(raw, dtype=dtype).reshape(header["shape"])
    return arr.astype(dtype.newbyteorder("="))


def canonical_json(obj) -> str:
    """Stable JSON text (sorted keys, fixed separators) for hashing/reports."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_checkpoint(directory, arrays: dict, manifest: dict) -> None:
    """Write named arrays plus a manifest into a checkpoint directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in arrays.items():
        write_array(directory / f"{name}.arr", arr)
    manifest = dict(manifest)
    manifest["arrays"] = sorted(arrays.keys())
    write_json(directory / "manifest.json", manifest)


def load_checkpoint(directory) -> tuple[dict, dict]:
    """Read back (arrays, manifest) written by save_checkpoint."""
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    arrays = {name: read_array(directory / f"{name}.arr") for name in manifest["arrays"]}
    return arrays, manifest
