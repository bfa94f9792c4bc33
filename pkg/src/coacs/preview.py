"""8-bit grayscale previews of grids as binary PGM images."""

from pathlib import Path

import numpy as np

from ._validation import check_grid
from .grid import hann_window

__all__ = ["TRANSFORMS", "render_preview", "to_uint8"]

TRANSFORMS = ("linear", "log", "derooted-window")


def _log_scale(v):
    v = np.clip(v, 0.0, None)
    pos = v[v > 0]
    if pos.size == 0:
        return np.zeros_like(v)
    return np.log10(np.maximum(v, pos.min()))


def to_uint8(grid, transform="linear", window=None, window_floor=1e-3):
    """Map a real grid to 0..255 after the chosen transform.

    The transformed values are scaled linearly from their minimum (0) to their
    maximum (255); a constant grid maps to mid-gray. ``derooted-window``
    divides by the intensity window (floored at ``window_floor**2``) and then
    applies the log transform. ``window`` defaults to the periodic Hann pair
    used for healing.
    """
    if transform not in TRANSFORMS:
        raise ValueError(f"transform must be one of {TRANSFORMS}, got {transform!r}")
    v = np.abs(check_grid(grid, "grid", dtype=np.complex128)) if np.iscomplexobj(grid) \
        else check_grid(grid, "grid")
    if transform == "derooted-window":
        if window is None:
            window = hann_window(v.shape[0], window_floor, sym=False)
        v = v / np.maximum(window.intensity, window_floor**2)
    if transform in ("log", "derooted-window"):
        v = _log_scale(v)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    return np.rint(255.0 * (v - lo) / (hi - lo)).astype(np.uint8)


def render_preview(grid, transform, out_path, window=None):
    """Write ``grid`` as a binary (P5) PGM image and return the path."""
    img = to_uint8(grid, transform, window)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    h, w = img.shape
    with open(out_path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return out_path


def read_pgm(path):
    """Read a binary PGM written by :func:`render_preview`."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
