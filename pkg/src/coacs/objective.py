"""Relaxed Poisson likelihood and windowed autocorrelation-support penalty.

The optimization variable is the *windowed* intensity ``y = w**2 * Y``, where
``Y`` is the physical (unwindowed) intensity and ``w`` the amplitude Hann
window. Every quantity handed to the solver is in translated form: a problem
carries an offset ``y0`` and the solver works on the increment ``ystar``, so
objective values are differences ``phi(y0 + ystar) - phi(y0)``.

Data term. For a pixel with ``k`` counts, quantum efficiency ``r`` and
intensity window ``w2 = w**2`` the Poisson likelihood of the unwindowed
intensity ``Y = y / w2`` gives, up to a constant,

    y / w2 - (k / r) * log(y)

in the windowed variable. Below a per-pixel border ``l / w2`` the log is
replaced by its tangent and ``(l / w2 - y)**2 / (2 l)`` is added. The
quadratic has the same curvature ``1 / l`` at every pixel, the border widens
towards the detector edge where ``w2`` is small, and a pixel without counts
is minimal at exactly ``y = 0``. This is ``weighting="poisson"``.

``weighting="window"`` instead multiplies each pixel's likelihood by ``w2``:
the linear weight becomes 1 and the border ``l``. Edge pixels then carry
almost no weight, so their healed values are poorly determined once the
window is divided out; it is kept for comparison.

Support term. ``sum(Q * |dft2(y)|**2)`` with ``Q`` zero on the
autocorrelation support, rising over a raised-cosine border to
``penalty_base / l``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from ._validation import check_counts, check_grid, check_mask, check_same_side
from .exceptions import NumericFailure
from .grid import WindowPair, compensated_sum, ifftshift

__all__ = [
    "HealProblem",
    "data_objective",
    "rho_l",
    "rho_l_delta",
    "support_penalty",
    "support_prox",
    "total_objective",
]


def rho_l(y, k, l_eff):
    """Relaxed negative log-Poisson and its derivative.

    Above the border ``l_eff`` this is ``y - k*log(y)``. Below it the log is
    replaced by its tangent at ``l_eff`` and ``(l_eff - y)**2 / (2*l_eff)``
    is added, so the function is convex, C1 at the border, defined for
    negative ``y`` and, for ``k = 0``, minimal exactly at ``y = 0``.
    """
    l_eff = np.asarray(l_eff, dtype=np.float64)
    if np.any(l_eff <= 0):
        raise ValueError("barrier width must be positive")
    y = np.asarray(y, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    above = y >= l_eff
    ysafe = np.where(above, y, l_eff)
    log_term = np.where(k > 0, k * np.log(ysafe), 0.0)
    below_val = (
        y - k * (np.log(l_eff) + (y - l_eff) / l_eff)
        + (l_eff - y) ** 2 / (2.0 * l_eff)
    )
    value = np.where(above, y - log_term, below_val)
    deriv = np.where(above, 1.0 - k / ysafe, 1.0 - k / l_eff - (l_eff - y) / l_eff)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def rho_l_delta(y0, ystar, k, l_eff):
    """Per-pixel ``rho_l(y0 + ystar) - rho_l(y0)`` without forming both values.

    When both points lie on the same branch the difference is evaluated in
    closed form (``log1p`` above the border, a factored quadratic below), so
    small increments on top of large offsets keep their relative accuracy.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    ystar = np.asarray(ystar, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    y = y0 + ystar
    up0, up1 = y0 >= l_eff, y >= l_eff
    both_up = up0 & up1
    both_down = ~up0 & ~up1

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(both_up, ystar / np.where(both_up, y0, 1.0), 0.0)
        d_up = ystar - np.where(k > 0, k * np.log1p(ratio), 0.0)
    d_down = ystar * (1.0 - k / l_eff) - ystar * (2.0 * (l_eff - y0) - ystar) / (2.0 * l_eff)
    mixed = ~(both_up | both_down)
    out = np.where(both_up, d_up, d_down)
    if np.any(mixed):
        v1, _ = rho_l(y[mixed], k[mixed], _pick(l_eff, mixed))
        v0, _ = rho_l(y0[mixed], k[mixed], _pick(l_eff, mixed))
        out[mixed] = v1 - v0
    return out


def _pick(a, sel):
    a = np.asarray(a)
    return a if a.ndim == 0 else a[sel]


@dataclass
class HealProblem:
    """Everything the solver needs for one pattern, around one offset ``y0``.

    ``counts`` are raw photon counts (unwindowed); ``beamstop`` marks pixels
    excluded from the likelihood; ``penalty_taper`` is the unit-plateau
    support-penalty profile in centred detector coordinates; ``y0`` is the
    windowed-intensity offset.
    """

    counts: np.ndarray
    beamstop: np.ndarray
    window: WindowPair
    acsupport: np.ndarray
    penalty_taper: np.ndarray
    y0: np.ndarray
    r: float = 1.0
    penalty_base: float = 5e7
    weighting: str = "poisson"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.counts = check_counts(self.counts)
        n = self.counts.shape[0]
        self.beamstop = check_mask(self.beamstop, "beamstop", n=n)
        self.acsupport = check_mask(self.acsupport, "acsupport", n=n)
        self.penalty_taper = check_grid(self.penalty_taper, "penalty_taper")
        self.y0 = check_grid(self.y0, "y0")
        check_same_side(self.counts, self.window.amp, self.penalty_taper, self.y0,
                        names=["counts", "window", "penalty_taper", "y0"])
        if not self.r > 0:
            raise ValueError(f"quantum efficiency must be positive, got {self.r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        observed = ~self.beamstop
        w2 = self.window.intensity
        self._cache["observed"] = observed
        kw = np.where(observed, w2 * self.counts / self.r, 0.0)
        self._cache["kw"] = kw
        # per-pixel scale s: linear weight and barrier border l * s
        scale = 1.0 / w2 if self.weighting == "poisson" else np.ones_like(w2)
        self._cache["scale"] = np.where(observed, scale, 0.0)
        self._cache["obs_f"] = observed.astype(np.float64)
        idx = np.flatnonzero(kw > 0)
        self._cache["k_idx"] = idx
        self._cache["k_val"] = (kw * scale).ravel()[idx]
        self._cache["k_scale"] = scale.ravel()[idx]
        q = ifftshift(self.penalty_taper)
        self._cache["q_half"] = np.ascontiguousarray(q[:, : n // 2 + 1])
        self._cache["y0_hat"] = scipy.fft.rfft2(self.y0)

    @property
    def n(self):
        return self.counts.shape[0]

    @property
    def observed(self):
        return self._cache["observed"]

    @property
    def effective_counts(self):
        """Windowed counts ``w**2 * k / r`` on observed pixels, 0 elsewhere."""
        return self._cache["kw"]

    def translated(self, y0):
        """The same problem re-centred on a new offset."""
        return HealProblem(self.counts, self.beamstop, self.window, self.acsupport,
                           self.penalty_taper, y0, self.r, self.penalty_base,
                           self.weighting)


WEIGHTINGS = ("poisson", "window")


def _log_part(v, l):
    """``log(v)`` above the border, its tangent at ``l`` below."""
    return np.where(v >= l, np.log(np.maximum(v, l)), np.log(l) + (v - l) / l)


def _log_part_delta(v0, vs, l):
    v = v0 + vs
    up0, up1 = v0 >= l, v >= l
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(up0 & up1, np.log1p(vs / np.where(up0, v0, 1.0)), vs / l)
    mixed = up0 != up1
    if np.any(mixed):
        lm = _pick(l, mixed)
        out[mixed] = _log_part(v[mixed], lm) - _log_part(v0[mixed], lm)
    return out


def data_objective(ystar, prob, l):
    """Translated relaxed-Poisson data term and its gradient in ``ystar``.

    Returns ``(f(y0 + ystar) - f(y0), grad)``. Beamstop pixels contribute
    nothing and have zero gradient.
    """
    if not l > 0:
        raise ValueError(f"barrier l must be positive, got {l}")
    ystar = np.asarray(ystar, dtype=np.float64)
    y0 = prob.y0
    y = y0 + ystar
    obs = prob._cache["obs_f"]
    s = prob._cache["scale"]
    # per pixel: s*y + max(b - y, 0)**2 / (2 l) - k * logpart_b(y) with border
    # b = l*s. Below the border the first two terms are y**2 / (2 l) + const,
    # written so that huge borders at the detector edge do not cancel.
    border = l * s
    lo, lo0 = y < border, y0 < border
    delta = np.where(lo & lo0, ystar * (y + y0) / (2.0 * l), s * ystar)
    cross = lo != lo0
    if np.any(cross):
        bc, sc, yc, y0c = border[cross], s[cross], y[cross], y0[cross]
        up = np.where(lo[cross], y0c, yc)
        down = np.where(lo[cross], yc, y0c)
        d = sc * (up - bc) + (bc - down) * (bc + down) / (2.0 * l)
        delta[cross] = np.where(lo[cross], -d, d)
    delta *= obs
    grad = np.where(lo, y / l, s) * obs

    idx, kw = prob._cache["k_idx"], prob._cache["k_val"]
    if idx.size:
        y0k, ysk = y0.ravel()[idx], ystar.ravel()[idx]
        bk = l * prob._cache["k_scale"]
        delta.ravel()[idx] -= kw * _log_part_delta(y0k, ysk, bk)
        grad.ravel()[idx] -= kw / np.maximum(y0k + ysk, bk)

    value = compensated_sum(delta)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        bad = ~np.isfinite(delta) | ~np.isfinite(grad)
        pixel = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.any() else None
        raise NumericFailure("non-finite data objective", pixel=pixel, diagnostics={"l": l})
    return value, grad


def _half_weights(n):
    # multiplicity of each rfft2 column in the full spectrum
    wt = np.full(n // 2 + 1, 2.0)
    wt[0] = 1.0
    if n % 2 == 0:
        wt[-1] = 1.0
    return wt


def _penalty_delta(a0, astar, q, n):
    """sum(Q * (|a0 + a*|**2 - |a0|**2)) over the full spectrum from rfft halves."""
    per = q * (2.0 * (a0.real * astar.real + a0.imag * astar.imag) + astar.real**2 + astar.imag**2)
    return compensated_sum(per * _half_weights(n))


def support_penalty(ystar, prob, l):
    """Translated support penalty and its gradient in ``ystar``.

    ``h(y) = sum(Q * |dft2(y)|**2)`` with ``Q = penalty_taper * penalty_base / l``.
    The value returned is ``h(y0 + ystar) - h(y0)``; the gradient is
    ``2 * n**2 * Re(idft2(Q * dft2(y0 + ystar)))``.
    """
    if not l > 0:
        raise ValueError(f"barrier l must be positive, got {l}")
    ystar = np.asarray(ystar, dtype=np.float64)
    n = prob.n
    scale = prob.penalty_base / l
    q = prob._cache["q_half"] * scale
    astar = scipy.fft.rfft2(ystar)
    a0 = prob._cache["y0_hat"]
    value = _penalty_delta(a0, astar, q, n)
    grad = 2.0 * n * n * scipy.fft.irfft2(q * (a0 + astar), s=(n, n))
    return value, grad


def support_prox(xstar, prob, l, t):
    """Proximal map of ``t * h`` in translated coordinates.

    Solves ``argmin_z h(y0 + z) + |z - xstar|**2 / (2 t)`` exactly in the
    Fourier domain: ``Z = (X - 2 t n**2 Q A0) / (1 + 2 t n**2 Q)``. Returns
    ``(z, h(y0 + z) - h(y0))``.
    """
    n = prob.n
    q = prob._cache["q_half"] * (prob.penalty_base / l)
    a0 = prob._cache["y0_hat"]
    c = 2.0 * t * n * n * q
    x_hat = scipy.fft.rfft2(xstar)
    z_hat = (x_hat - c * a0) / (1.0 + c)
    z = scipy.fft.irfft2(z_hat, s=(n, n))
    return z, _penalty_delta(a0, z_hat, q, n)


def total_objective(ystar, prob, l):
    """``phi = f + h`` in translated form, with its gradient."""
    fv, fg = data_objective(ystar, prob, l)
    hv, hg = support_penalty(ystar, prob, l)
    return fv + hv, fg + hg
