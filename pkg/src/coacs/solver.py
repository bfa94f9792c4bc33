"""Accelerated proximal-gradient inner solver with guarded Lipschitz backtracking."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateStep, NumericFailure
from .grid import compensated_sum
from .objective import data_objective, support_prox

__all__ = ["SolverState", "lipschitz_policy", "solve_inner"]

log = logging.getLogger(__name__)

AGGRESSIVE = "aggressive"
CONSERVATIVE = "conservative"


def _dot(a, b):
    return compensated_sum(np.multiply(a, b))


def _norm(a):
    a = np.ravel(a)
    return float(np.sqrt(np.dot(a, a)))


def lipschitz_policy(prev_point, new_point, f_prev, f_new, g_prev, g_new, rel_eps=1e-8):
    """Local Lipschitz estimate of the gradient between two points.

    Two bounds are available. The aggressive one,
    ``2 (f_new - f_prev - <g_prev, d>) / |d|**2``, is exactly the smallest L
    for which the quadratic upper model holds at ``new_point``, but it is
    built from a difference of function values. The conservative one,
    ``<g_new - g_prev, d> / |d|**2``, only uses gradients. The choice is
    made from the pair at hand, before the estimate is used: when the
    function values or the points themselves agree to ``rel_eps`` relative
    precision the conservative bound is returned. Nothing is remembered, so
    the next step may return to the aggressive bound.

    Returns ``(L, mode)``. Raises DegenerateStep when the points coincide.
    """
    d = np.subtract(new_point, prev_point).ravel()
    dd = float(np.dot(d, d))
    if dd == 0.0:
        raise DegenerateStep("identical points")
    flat = abs(f_new - f_prev) <= rel_eps * (abs(f_new) + abs(f_prev))
    short = np.sqrt(dd) <= rel_eps * (_norm(prev_point) + _norm(new_point))
    if flat or short:
        return float(np.dot(np.subtract(g_new, g_prev).ravel(), d)) / dd, CONSERVATIVE
    return 2.0 * (f_new - f_prev - _dot(np.ravel(g_prev), d)) / dd, AGGRESSIVE


@dataclass
class SolverState:
    """Iterate, momentum and step-size state carried between inner solves.

    ``ystar`` is the current iterate relative to the problem offset;
    ``phi`` its translated objective value.
    """

    ystar: np.ndarray
    L: float = 1.0
    bound_mode: str = AGGRESSIVE
    prev: np.ndarray = None
    theta: float = 1.0
    phi: float = 0.0
    iterations: int = 0
    backtracks: int = 0
    restarts: int = 0
    history: list = field(default_factory=list)

    def reset_momentum(self):
        self.prev = None
        self.theta = 1.0


def _phi(ystar, prob, l):
    from .objective import support_penalty

    fv, _ = data_objective(ystar, prob, l)
    hv, _ = support_penalty(ystar, prob, l)
    return fv + hv


def solve_inner(state, prob, l, budget, tol=0.0, max_backtracks=60,
                L_decay=0.9, rel_eps=1e-8):
    """Run up to ``budget`` accelerated proximal-gradient steps on ``f + h``.

    ``f`` is the relaxed data term (smooth, handled through its gradient) and
    ``h`` the quadratic support penalty (handled through its exact proximal
    map). Step sizes are ``1/L``; each step first relaxes ``L`` by
    ``L_decay`` and then backtracks (``L <- max(estimate, 2L)``) until the
    local estimate from :func:`lipschitz_policy` does not exceed ``L``.
    Whenever a step would raise the objective it is discarded and the
    momentum reset, so the returned state never has a larger objective than
    the one passed in. Iteration stops early when the relative objective
    decrease of an unaccelerated step falls below ``tol`` or the step
    vanishes.
    """
    if budget <= 0:
        raise ValueError("iteration budget must be positive")
    x = np.asarray(state.ystar, dtype=np.float64)
    if state.phi is None:
        state.phi = _phi(x, prob, l)
    phi_x = state.phi
    L = state.L
    stalled = False

    f_x = g_x = None
    for _ in range(budget):
        L_old, theta_old = L, state.theta
        L = L * L_decay
        accelerated = state.prev is not None
        if accelerated:
            theta = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * (L / L_old) / theta_old**2))
            y = x + theta * (1.0 / theta_old - 1.0) * (x - state.prev)
            f_y, g_y = data_objective(y, prob, l)
        else:
            theta, y = 1.0, x
            if f_x is None:
                f_x, g_x = data_objective(x, prob, l)
            f_y, g_y = f_x, g_x
        for _bt in range(max_backtracks + 1):
            x_new, h_new = support_prox(y - g_y / L, prob, l, 1.0 / L)
            f_new, g_new = data_objective(x_new, prob, l)
            try:
                L_est, mode = lipschitz_policy(y, x_new, f_y, f_new, g_y, g_new, rel_eps)
            except DegenerateStep:
                L_est, mode = 0.0, state.bound_mode
            if not np.isfinite(L_est):
                raise NumericFailure("non-finite Lipschitz estimate",
                                     diagnostics={"l": l, "L": L})
            state.bound_mode = mode
            if L_est <= L:
                break
            L = max(L_est, 2.0 * L)
            state.backtracks += 1
        else:
            raise NumericFailure(
                "backtracking exhausted",
                diagnostics={"l": l, "L": L, "iterations": state.iterations},
            )

        phi_new = f_new + h_new
        state.iterations += 1
        if not np.isfinite(phi_new):
            raise NumericFailure("non-finite objective", diagnostics={"l": l, "L": L})
        if phi_new > phi_x:
            # no-regress restart
            state.restarts += 1
            if not accelerated:
                stalled = True
                break
            state.reset_momentum()
            continue
        if not accelerated and phi_x - phi_new <= tol * (abs(phi_x) + abs(phi_new)):
            stalled = phi_x == phi_new
            state.prev, x, phi_x = x, x_new, phi_new
            state.theta = theta
            break
        state.prev, x, phi_x = x, x_new, phi_new
        f_x, g_x = f_new, g_new
        state.theta = theta

    state.ystar = x
    state.phi = phi_x
    state.L = L
    state.history.append(phi_x)
    if stalled:
        log.debug("inner solve stalled at l=%g after %d iterations", l, state.iterations)
    return state
