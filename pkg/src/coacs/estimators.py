"""Scikit-learn style wrappers around healing and phasing.

Both estimators take a single pattern (n, n) or a stack (m, n, n) as ``X``.
Configuration lives in constructor parameters so that ``get_params`` /
``set_params`` and ``sklearn.base.clone`` work as usual.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import check_mask
from .grid import autocorr_support, centered_square
from .healing import HealConfig, heal
from .metrics import amplitudes
from .phasing import PhaseConfig, phase_ensemble

__all__ = ["COACSHealer", "HIOERPhaser"]


def _as_stack(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return X[None], True
    if X.ndim == 3:
        return X, False
    raise ValueError(f"expected an (n, n) pattern or an (m, n, n) stack, got shape {X.shape}")


def _check_square(stack):
    if stack.shape[1] != stack.shape[2]:
        raise ValueError(f"patterns must be square, got {stack.shape[1:]}")
    if not np.all(np.isfinite(stack)):
        raise ValueError("patterns contain non-finite values")


class COACSHealer(TransformerMixin, BaseEstimator):
    """Heal Poisson-sampled diffraction patterns.

    ``fit`` only records the grid size and builds the autocorrelation
    support from ``support_side`` (a real-space square); the healing itself
    happens per pattern in ``transform``. ``output`` chooses between the
    unwindowed (default) and windowed result. After ``transform`` the
    per-pattern :class:`coacs.healing.HealResult` objects are in
    ``results_``.
    """

    def __init__(self, support_side=31, l_init=4.0, l_factor=0.5, l_min=2.0 ** -46,
                 penalty_base=5e7, outer_accel=0.5, inner_accel=0.9, inner_iters=2000,
                 tol=1e-9, max_inner_rounds=20, taper_width=5, window_floor=1e-3,
                 r=1.0, weighting="poisson", output="unwindowed"):
        self.support_side = support_side
        self.l_init = l_init
        self.l_factor = l_factor
        self.l_min = l_min
        self.penalty_base = penalty_base
        self.outer_accel = outer_accel
        self.inner_accel = inner_accel
        self.inner_iters = inner_iters
        self.tol = tol
        self.max_inner_rounds = max_inner_rounds
        self.taper_width = taper_width
        self.window_floor = window_floor
        self.r = r
        self.weighting = weighting
        self.output = output

    def heal_config(self):
        names = ("l_init", "l_factor", "l_min", "penalty_base", "outer_accel", "inner_accel",
                 "inner_iters", "tol", "max_inner_rounds", "taper_width", "window_floor",
                 "r", "weighting")
        return HealConfig(**{k: getattr(self, k) for k in names})

    def fit(self, X, y=None, beamstop=None):
        stack, _ = _as_stack(X)
        _check_square(stack)
        if self.output not in ("unwindowed", "windowed"):
            raise ValueError("output must be 'unwindowed' or 'windowed'")
        self.config_ = self.heal_config()
        self.n_ = stack.shape[1]
        self.acsupport_ = autocorr_support(centered_square(self.n_, self.support_side))
        return self

    def transform(self, X, beamstop=None):
        """Heal every pattern in ``X``; ``beamstop`` marks missing pixels."""
        if not hasattr(self, "n_"):
            raise NotFittedError("COACSHealer is not fitted yet; call fit first")
        stack, single = _as_stack(X)
        _check_square(stack)
        if stack.shape[1] != self.n_:
            raise ValueError(f"fitted on side {self.n_}, got side {stack.shape[1]}")
        if beamstop is None:
            beamstop = np.zeros((self.n_, self.n_), dtype=bool)
        beamstop = check_mask(beamstop, "beamstop", n=self.n_)
        self.results_ = [heal(p, beamstop, self.acsupport_, self.config_) for p in stack]
        key = "unwindowed" if self.output == "unwindowed" else "windowed"
        out = np.stack([getattr(res, key) for res in self.results_])
        return out[0] if single else out

    def fit_transform(self, X, y=None, beamstop=None):
        return self.fit(X, beamstop=beamstop).transform(X, beamstop=beamstop)


class HIOERPhaser(BaseEstimator):
    """Ensemble HIO + ER phasing of intensity patterns.

    ``fit`` phases every pattern in ``X`` (intensities; negative values are
    clamped before taking square roots). ``transform`` returns the averaged
    amplitudes and ``predict`` the averaged real-space objects of the fitted
    patterns.
    """

    def __init__(self, support_side=31, beta=0.9, hio_iters=50000, er_iters=10000,
                 replicates=100, keep_best=10, seed=0, n_jobs=1):
        self.support_side = support_side
        self.beta = beta
        self.hio_iters = hio_iters
        self.er_iters = er_iters
        self.replicates = replicates
        self.keep_best = keep_best
        self.seed = seed
        self.n_jobs = n_jobs

    def phase_config(self):
        return PhaseConfig(beta=self.beta, hio_iters=self.hio_iters, er_iters=self.er_iters,
                           replicates=self.replicates, keep_best=self.keep_best,
                           support_side=self.support_side, seed=self.seed, n_jobs=self.n_jobs)

    def fit(self, X, y=None, free_mask=None):
        stack, single = _as_stack(X)
        _check_square(stack)
        config = self.phase_config()
        self.amplitudes_, self.objects_, self.results_ = [], [], []
        for pattern in stack:
            amp, obj, results = phase_ensemble(amplitudes(pattern), free_mask, config)
            self.amplitudes_.append(amp)
            self.objects_.append(obj)
            self.results_.append(results)
        self.single_ = single
        return self

    def _check_fitted(self):
        if not hasattr(self, "amplitudes_"):
            raise NotFittedError("HIOERPhaser is not fitted yet; call fit first")

    def transform(self, X=None):
        self._check_fitted()
        out = np.stack(self.amplitudes_)
        return out[0] if self.single_ else out

    def predict(self, X=None):
        self._check_fitted()
        out = np.stack(self.objects_)
        return out[0] if self.single_ else out
