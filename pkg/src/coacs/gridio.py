"""Grid files: a JSON header next to a raw little-endian payload.

``name.grid`` (or ``name.mask``) holds the payload; ``name.grid.json`` holds
``{"n": 128, "dtype": "f64", "layout": "row-major"}``. Real grids are stored
as ``<f8``, complex grids as interleaved ``<f8`` re/im pairs (``<c16``) and
masks as bytes with values 0/1.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = ["DTYPES", "file_digest", "read_grid", "write_grid"]

DTYPES = {"f64": np.dtype("<f8"), "c128": np.dtype("<c16"), "u8": np.dtype("u1")}


def _header_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def _dtype_tag(a):
    if a.dtype == bool:
        return "u8"
    if np.iscomplexobj(a):
        return "c128"
    return "f64"


def write_grid(path, grid, dtype=None):
    """Write a square grid and its header. Returns the payload path.

    ``dtype`` defaults to ``u8`` for boolean arrays, ``c128`` for complex
    ones and ``f64`` otherwise.
    """
    a = np.asarray(grid)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square 2D grid, got shape {a.shape}")
    tag = dtype or _dtype_tag(a)
    if tag not in DTYPES:
        raise ValueError(f"unknown grid dtype {tag!r}")
    if tag == "u8":
        vals = np.asarray(a)
        if not np.all((vals == 0) | (vals == 1)):
            raise ValueError("mask grids must hold only 0 and 1")
    elif not np.all(np.isfinite(a)):
        raise ValueError("grid contains non-finite values")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(a, dtype=DTYPES[tag])
    path.write_bytes(payload.tobytes(order="C"))
    header = {"n": int(a.shape[0]), "dtype": tag, "layout": "row-major"}
    _header_path(path).write_text(json.dumps(header) + "\n")
    return path


def read_grid(path):
    """Read a grid written by :func:`write_grid`; masks come back boolean."""
    path = Path(path)
    header = json.loads(_header_path(path).read_text())
    tag, n = header.get("dtype"), header.get("n")
    if tag not in DTYPES:
        raise ValueError(f"{path}: unknown dtype {tag!r}")
    if header.get("layout", "row-major") != "row-major":
        raise ValueError(f"{path}: unsupported layout {header['layout']!r}")
    if not isinstance(n, int) or n < 1:
        raise ValueError(f"{path}: bad side length {n!r}")
    raw = path.read_bytes()
    dt = DTYPES[tag]
    if len(raw) != n * n * dt.itemsize:
        raise ValueError(f"{path}: payload has {len(raw)} bytes, expected {n * n * dt.itemsize}")
    a = np.frombuffer(raw, dtype=dt).reshape(n, n)
    if tag == "u8":
        return a.astype(bool)
    return a.astype(np.complex128 if tag == "c128" else np.float64)


def file_digest(path):
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
