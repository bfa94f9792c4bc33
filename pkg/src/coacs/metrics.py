"""Crystallographic R factors, globally and per radial shell."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_grid, check_mask, check_same_side
from .exceptions import UndefinedMetric
from .grid import center_index

__all__ = ["RadialProfile", "amplitudes", "r_factor", "radial_r_factor", "shell_index"]


def amplitudes(intensity):
    """Wave amplitudes from intensities, clamping negative values to zero."""
    return np.sqrt(np.clip(intensity, 0.0, None))


def r_factor(recovered_amp, true_amp, region=None):
    """``sum| |rec| - |true| | / sum |true|`` over ``region`` (default: all pixels)."""
    rec = check_grid(np.abs(recovered_amp), "recovered_amp")
    ref = check_grid(np.abs(true_amp), "true_amp")
    check_same_side(rec, ref, names=["recovered_amp", "true_amp"])
    if region is None:
        region = np.ones(ref.shape, dtype=bool)
    else:
        region = check_mask(region, "region", n=ref.shape[0])
    denom = ref[region].sum()
    if denom == 0:
        raise UndefinedMetric("true amplitudes are zero over the region")
    return float(np.abs(rec - ref)[region].sum() / denom)


def shell_index(n):
    """Integer radius (rounded distance to the grid centre) of every pixel."""
    c = center_index(n)
    yy, xx = np.indices((n, n))
    return np.rint(np.hypot(yy - c, xx - c)).astype(np.int64)


@dataclass
class RadialProfile:
    """Per-shell R factors. ``r_factors`` is NaN for shells with no true signal."""

    radii: np.ndarray
    r_factors: np.ndarray
    counts: np.ndarray
    numerators: np.ndarray
    denominators: np.ndarray

    def total(self):
        """Global R factor recombined from the shell sums."""
        return float(self.numerators.sum() / self.denominators.sum())

    def as_rows(self):
        return [
            {"radius": int(r), "r_factor": float(v), "pixels": int(c)}
            for r, v, c in zip(self.radii, self.r_factors, self.counts)
        ]


def radial_r_factor(recovered_amp, true_amp, n_shells=None):
    """R factor restricted to each integer-radius shell about the grid centre.

    Shells partition the whole grid; ``n_shells`` truncates the output to the
    innermost shells. Shells whose true amplitudes sum to zero report NaN.
    """
    rec = check_grid(np.abs(recovered_amp), "recovered_amp")
    ref = check_grid(np.abs(true_amp), "true_amp")
    check_same_side(rec, ref, names=["recovered_amp", "true_amp"])
    shells = shell_index(ref.shape[0]).ravel()
    nbins = shells.max() + 1
    num = np.bincount(shells, weights=np.abs(rec - ref).ravel(), minlength=nbins)
    den = np.bincount(shells, weights=ref.ravel(), minlength=nbins)
    cnt = np.bincount(shells, minlength=nbins)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(den > 0, num / den, np.nan)
    if n_shells is not None:
        sl = slice(0, int(n_shells))
        num, den, cnt, vals = num[sl], den[sl], cnt[sl], vals[sl]
    return RadialProfile(np.arange(len(vals)), vals, cnt, num, den)
