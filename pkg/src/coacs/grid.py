"""Square grids: Fourier transforms, Hann windows and support-mask algebra.

All grids are plain ``numpy`` arrays of shape (n, n). Real fields are
float64, complex fields complex128 and masks bool. Detector-space grids keep
the zero frequency at the grid centre, index ``n // 2`` on each axis; the
transforms in this module keep it at (0, 0) and the shift helpers convert.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import ndimage, signal

from ._validation import check_grid, check_mask

__all__ = [
    "WindowPair",
    "autocorr_support",
    "center_index",
    "centered_square",
    "compensated_sum",
    "dft2",
    "fftshift",
    "hann_window",
    "ifftshift",
    "taper_weights",
]


def dft2(field, inverse=False):
    """2D discrete Fourier transform with the DC term at index (0, 0).

    The forward transform is unnormalized; the inverse carries the 1/n**2
    factor so that ``dft2(dft2(x), inverse=True)`` returns ``x``.
    """
    field = check_grid(field, "field", dtype=np.complex128, finite=False)
    if inverse:
        return scipy.fft.ifft2(field)
    return scipy.fft.fft2(field)


def fftshift(a):
    """Move the DC term from (0, 0) to the grid centre."""
    return np.fft.fftshift(a)


def ifftshift(a):
    """Move the DC term from the grid centre back to (0, 0)."""
    return np.fft.ifftshift(a)


def center_index(n):
    return n // 2


def centered_square(n, side):
    """Boolean n x n mask holding a ``side`` x ``side`` square at the centre.

    The square spans ``n//2 - side//2`` to ``n//2 - side//2 + side - 1`` on
    each axis.
    """
    if side < 1 or side > n:
        raise ValueError(f"square side {side} does not fit a grid of side {n}")
    mask = np.zeros((n, n), dtype=bool)
    lo = center_index(n) - side // 2
    mask[lo:lo + side, lo:lo + side] = True
    return mask


@dataclass(frozen=True)
class WindowPair:
    """Amplitude-space Hann weights and their square (intensity weights)."""

    amp: np.ndarray
    intensity: np.ndarray

    @property
    def n(self):
        return self.amp.shape[0]


def hann_window(n, floor=1e-3, sym=True):
    """Separable 2D Hann window ``h(i) * h(j) + floor`` and its square.

    With ``sym`` (the default) the 1D profile is the symmetric Hann
    ``0.5 * (1 - cos(2 pi m / (n - 1)))``, exactly zero at both edges. With
    ``sym=False`` it is the periodic variant ``0.5 * (1 - cos(2 pi m / n))``,
    which peaks exactly at index ``n // 2`` and whose Fourier transform is a
    three-tap stencil, so windowing blurs the autocorrelation by at most two
    pixels in intensity space.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"window side must be >= 2, got {n}")
    if floor < 0:
        raise ValueError(f"window floor must be >= 0, got {floor}")
    m = np.arange(n, dtype=np.float64)
    period = n - 1 if sym else n
    h = 0.5 * (1.0 - np.cos(2.0 * np.pi * m / period))
    amp = np.multiply.outer(h, h) + floor
    return WindowPair(amp=amp, intensity=amp * amp)


def autocorr_support(support):
    """Support of the self-correlation of ``support``, centred on the grid.

    Returns the mask of all points ``c + (a - b)`` for pixels ``a``, ``b`` in
    ``support`` and ``c`` the grid centre. The difference set is counted
    exactly with integer arithmetic on the bounding box of the support.
    """
    support = check_mask(support, "support", nonempty=True)
    n = support.shape[0]
    rows, cols = np.nonzero(support)
    box = support[rows.min():rows.max() + 1, cols.min():cols.max() + 1]
    box = box.astype(np.int64)
    pairs = signal.correlate2d(box, box, mode="full")
    h, w = box.shape
    # pairs[i, j] counts (a, b) with a - b = (i - (h - 1), j - (w - 1))
    c = center_index(n)
    top, left = c - (h - 1), c - (w - 1)
    if top < 0 or left < 0 or top + 2 * h - 1 > n or left + 2 * w - 1 > n:
        raise ValueError(
            f"autocorrelation support of a {h}x{w} support box does not fit a "
            f"{n}x{n} grid"
        )
    out = np.zeros((n, n), dtype=bool)
    out[top:top + 2 * h - 1, left:left + 2 * w - 1] = pairs > 0
    return out


def taper_weights(mask, width, peak):
    """Penalty weights: 0 on ``mask``, ``peak`` far from it, raised cosine between.

    A pixel at Chebyshev distance ``d`` from the nearest mask pixel gets
    ``peak * 0.5 * (1 - cos(pi * d / width))`` for ``d < width`` and ``peak``
    otherwise.
    """
    mask = check_mask(mask, "mask")
    if width < 0:
        raise ValueError(f"taper width must be >= 0, got {width}")
    if peak < 0:
        raise ValueError(f"taper peak must be >= 0, got {peak}")
    if not mask.any():
        return np.full(mask.shape, float(peak))
    dist = ndimage.distance_transform_cdt(~mask, metric="chessboard").astype(np.float64)
    if width == 0:
        ramp = np.where(dist > 0, 1.0, 0.0)
    else:
        ramp = np.where(
            dist >= width, 1.0, 0.5 * (1.0 - np.cos(np.pi * dist / width))
        )
    return peak * ramp


def compensated_sum(values):
    """Sum of ``values`` with error-free pairwise transformations.

    Each level of a pairwise reduction splits ``a + b`` into its rounded sum
    and exact rounding error (TwoSum). Once a few hundred partial sums are
    left they are added, together with the accumulated errors, by
    ``math.fsum``. Accurate to about one rounding of the exact total,
    independent of cancellation between terms.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    tail = []
    errors = 0.0
    while v.size > 256:
        if v.size % 2:
            tail.append(float(v[-1]))
            v = v[:-1]
        half = v.size // 2
        a, b = v[:half], v[half:]
        s = a + b
        bb = s - a
        errors += np.sum((a - (s - bb)) + (b - bb))
        v = s
    return math.fsum([*v.tolist(), *tail, errors])
