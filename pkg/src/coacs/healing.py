"""Continuation driver for intensity healing."""

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_counts, check_mask
from .grid import dft2, hann_window, taper_weights
from .objective import WEIGHTINGS, HealProblem, data_objective, support_penalty
from .solver import SolverState, solve_inner

__all__ = ["HealConfig", "HealResult", "barrier_schedule", "heal", "support_leakage"]

log = logging.getLogger(__name__)


@dataclass
class HealConfig:
    """Continuation schedule and solver settings.

    The barrier ``l`` runs from ``l_init`` down to ``l_min`` in steps of
    ``l_factor``. Within each ``l``, inner rounds of ``inner_iters``
    iterations are repeated until the objective change of a round, divided
    by ``l``, drops below ``tol`` or ``max_inner_rounds`` is reached.
    ``weighting`` selects the data term (see :mod:`coacs.objective`).
    """

    l_init: float = 4.0
    l_factor: float = 0.5
    l_min: float = 2.0 ** -46
    penalty_base: float = 5e7
    outer_accel: float = 0.5
    inner_accel: float = 0.9
    inner_iters: int = 2000
    tol: float = 1e-9
    max_inner_rounds: int = 20
    max_backtracks: int = 60
    taper_width: int = 5
    window_floor: float = 1e-3
    window_sym: bool = False
    r: float = 1.0
    weighting: str = "poisson"

    def __post_init__(self):
        if not 0 < self.l_factor < 1:
            raise ValueError("l_factor must lie in (0, 1)")
        if not 0 < self.l_min < self.l_init:
            raise ValueError("need 0 < l_min < l_init")
        for name in ("outer_accel", "inner_accel"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.inner_iters < 1 or self.max_inner_rounds < 1:
            raise ValueError("inner_iters and max_inner_rounds must be >= 1")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if not self.r > 0:
            raise ValueError("r must be positive")

    def to_dict(self):
        return asdict(self)


def barrier_schedule(l_init, l_factor, l_min):
    out, l = [], float(l_init)
    while l >= l_min * (1 - 1e-12):
        out.append(l)
        l *= l_factor
    return out


@dataclass
class HealResult:
    windowed: np.ndarray
    unwindowed: np.ndarray
    window: object
    log: list = field(default_factory=list)
    endpoint_increases: int = 0
    rejected_extrapolations: int = 0
    iterations: int = 0
    unconverged_levels: int = 0


def support_leakage(y, taper):
    """Fraction of ``|dft2(y)|**2`` energy weighted by the (unit) penalty taper."""
    from .grid import ifftshift

    spec = np.abs(dft2(y)) ** 2
    total = spec.sum()
    return float((ifftshift(taper) * spec).sum() / total) if total > 0 else 0.0


def _phi_between(prob, base, point, l):
    """``phi_l(point) - phi_l(base)`` evaluated in translated form around ``base``."""
    p = prob.translated(base)
    d = point - base
    fv, _ = data_objective(d, p, l)
    hv, _ = support_penalty(d, p, l)
    return fv + hv


def heal(counts, beamstop, acsupport, config=None):
    """Maximum-likelihood intensities under the autocorrelation-support penalty.

    ``counts`` are unwindowed photon counts with the zero frequency at the
    grid centre, ``beamstop`` marks missing pixels and ``acsupport`` is the
    allowed support of the autocorrelation (see
    :func:`coacs.grid.autocorr_support`). Returns a :class:`HealResult`
    holding the windowed solution and its unwindowed companion.
    """
    config = config or HealConfig()
    counts = check_counts(counts)
    n = counts.shape[0]
    beamstop = check_mask(beamstop, "beamstop", n=n)
    acsupport = check_mask(acsupport, "acsupport", n=n, nonempty=True)

    window = hann_window(n, config.window_floor, sym=config.window_sym)
    taper = taper_weights(acsupport, config.taper_width, 1.0)
    w2 = window.intensity
    y_start = w2 * np.maximum(counts / config.r, config.l_init)
    prob = HealProblem(counts, beamstop, window, acsupport, taper, y_start,
                       config.r, config.penalty_base, config.weighting)

    state = SolverState(ystar=np.zeros((n, n)))
    result = HealResult(windowed=None, unwindowed=None, window=window)
    outer = [y_start]

    for i, l in enumerate(barrier_schedule(config.l_init, config.l_factor, config.l_min)):
        if i > 2 and config.outer_accel > 0:
            start = outer[-1] + config.outer_accel * (outer[-1] - outer[-2])
        else:
            start = outer[-1]
        ends = [start]
        rounds, converged, total_change = 0, False, 0.0
        while rounds < config.max_inner_rounds:
            prev_end = ends[-1]
            accelerate = len(ends) >= 3 and config.inner_accel > 0
            if accelerate:
                begin = prev_end + config.inner_accel * (prev_end - ends[-2])
            else:
                begin = prev_end
            end = _inner_round(prob, state, begin, l, config)
            change = _phi_between(prob, prev_end, end, l)
            if accelerate:
                closer_to_old = np.linalg.norm(end - prev_end) < np.linalg.norm(end - begin)
                if closer_to_old or change > 0:
                    result.rejected_extrapolations += 1
                    end = _inner_round(prob, state, prev_end, l, config)
                    change = _phi_between(prob, prev_end, end, l)
            if change > 0:
                result.endpoint_increases += 1
                log.warning("objective increased by %.3g at l=%g", change, l)
            ends.append(end)
            rounds += 1
            total_change += change
            if abs(change) / l < config.tol:
                converged = True
                break
        if not converged:
            result.unconverged_levels += 1
        outer.append(ends[-1])
        if len(outer) > 3:
            outer.pop(0)
        row = {
            "outer": i,
            "l": l,
            "inner_rounds": rounds,
            "objective_change": total_change,
            "support_leakage": support_leakage(ends[-1], taper),
        }
        result.log.append(row)
        log.info("l=%.3g rounds=%d change=%.4g leak=%.3g L=%.3g it=%d", l, rounds,
                 total_change, row["support_leakage"], state.L, state.iterations)

    if result.unconverged_levels:
        warnings.warn(
            f"inner continuation hit max_inner_rounds at {result.unconverged_levels} "
            "barrier levels; returning the last iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    result.windowed = outer[-1]
    result.unwindowed = outer[-1] / w2
    result.iterations = state.iterations
    return result


def _inner_round(prob, state, begin, l, config):
    p = prob.translated(begin)
    state.ystar = np.zeros_like(begin)
    state.phi = 0.0
    state.reset_momentum()
    solve_inner(state, p, l, config.inner_iters, max_backtracks=config.max_backtracks)
    return begin + state.ystar
