import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coacs.grid import autocorr_support, centered_square, dft2, hann_window, ifftshift, taper_weights
from coacs.objective import (
    HealProblem,
    data_objective,
    rho_l,
    rho_l_delta,
    support_penalty,
    support_prox,
    total_objective,
)

from conftest import random_problem

L_VALUES = [4.0, 1.0, 2.0**-10]


def rho_oracle(y, k, b):
    """Scalar relaxed negative log-likelihood, written out branch by branch."""
    if y >= b:
        return y - (k * math.log(y) if k > 0 else 0.0)
    tangent = math.log(b) + (y - b) / b
    return y - k * tangent + (b - y) ** 2 / (2 * b)


def data_oracle(prob, y, l):
    """Untranslated data term from per-pixel scalar evaluation."""
    w2 = prob.window.intensity
    total = []
    for (i, j), obs in np.ndenumerate(prob.observed):
        if not obs:
            continue
        k = w2[i, j] * prob.counts[i, j] / prob.r
        if prob.weighting == "poisson":
            c, b = 1.0 / w2[i, j], l / w2[i, j]
        else:
            c, b = 1.0, l
        total.append(c * rho_oracle(y[i, j], k, b))
    return math.fsum(total)


def penalty_oracle(prob, y, l):
    q = ifftshift(prob.penalty_taper) * prob.penalty_base / l
    return math.fsum((q * np.abs(dft2(y)) ** 2).ravel())


class TestRho:
    def test_worked_example(self):
        # k=3, border 4, y=1: below the border
        v, d = rho_l(1.0, 3.0, 4.0)
        want = 1.0 - 3.0 * (math.log(4.0) - 0.75) + 9.0 / 8.0
        assert v == pytest.approx(want, rel=1e-14)
        assert d == pytest.approx(1.0 - 0.75 - 0.75, rel=1e-14)

    def test_above_border_is_log_likelihood(self):
        v, d = rho_l(5.0, 2.0, 1.0)
        assert v == pytest.approx(5.0 - 2.0 * math.log(5.0))
        assert d == pytest.approx(1.0 - 0.4)

    def test_zero_counts_minimum_at_zero(self):
        ys = np.linspace(-2, 2, 401)
        v, _ = rho_l(ys, np.zeros_like(ys), 0.5)
        assert ys[np.argmin(v)] == pytest.approx(0.0, abs=1e-12)
        assert rho_l(0.0, 0.0, 0.5)[1] == 0.0

    @given(st.floats(-10, 10), st.floats(0, 20), st.floats(1e-3, 5))
    def test_matches_scalar_oracle(self, y, k, b):
        assert rho_l(y, k, b)[0] == pytest.approx(rho_oracle(y, k, b), rel=1e-12, abs=1e-12)

    @given(st.floats(-5, 5), st.floats(0, 10), st.floats(1e-2, 3))
    def test_c1_at_border(self, dy, k, b):
        eps = 1e-7 * b
        lo, hi = rho_l(b - eps, k, b), rho_l(b + eps, k, b)
        assert abs(lo[1] - hi[1]) <= 1e-5 * (1 + k / b)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 10), st.floats(1e-2, 3))
    def test_delta_matches_difference(self, y0, ys, k, b):
        want = rho_oracle(y0 + ys, k, b) - rho_oracle(y0, k, b)
        got = rho_l_delta(np.array([y0]), np.array([ys]), np.array([k]), b)[0]
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9 * (1 + abs(y0) + k))

    def test_rejects_nonpositive_border(self):
        with pytest.raises(ValueError):
            rho_l(1.0, 1.0, 0.0)


@pytest.mark.parametrize("weighting", ["poisson", "window"])
@pytest.mark.parametrize("l", L_VALUES)
class TestDataTerm:
    def test_matches_oracle(self, rng, weighting, l):
        prob = random_problem(rng, l_scale=l, weighting=weighting)
        ys = rng.normal(scale=0.3, size=(16, 16)) * prob.window.intensity
        got, _ = data_objective(ys, prob, l)
        want = data_oracle(prob, prob.y0 + ys, l) - data_oracle(prob, prob.y0, l)
        scale = abs(data_oracle(prob, prob.y0, l)) + 1.0
        assert got == pytest.approx(want, abs=1e-10 * scale)

    def test_finite_differences(self, rng, weighting, l):
        prob = random_problem(rng, l_scale=l, weighting=weighting)
        ys = rng.normal(scale=0.1, size=(16, 16)) * prob.window.intensity
        _, g = data_objective(ys, prob, l)
        d = rng.normal(size=(16, 16))
        h = 1e-6 * l
        fp, _ = data_objective(ys + h * d, prob, l)
        fm, _ = data_objective(ys - h * d, prob, l)
        fd = (fp - fm) / (2 * h)
        exact = float(np.sum(g * d))
        assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9 * np.sum(np.abs(g * d)))

    def test_beamstop_has_zero_gradient(self, rng, weighting, l):
        prob = random_problem(rng, l_scale=l, weighting=weighting, beamstop_side=5)
        ys = rng.normal(size=(16, 16))
        _, g = data_objective(ys, prob, l)
        assert np.all(g[prob.beamstop] == 0)
        bump = np.where(prob.beamstop, 3.0, 0.0)
        v0, _ = data_objective(ys, prob, l)
        v1, _ = data_objective(ys + bump, prob, l)
        assert v0 == v1

    def test_zero_increment(self, rng, weighting, l):
        prob = random_problem(rng, l_scale=l, weighting=weighting)
        assert data_objective(np.zeros((16, 16)), prob, l)[0] == 0.0


class TestPenalty:
    @pytest.mark.parametrize("l", L_VALUES)
    def test_matches_oracle(self, rng, l):
        prob = random_problem(rng, l_scale=l)
        ys = rng.normal(size=(16, 16))
        got, _ = support_penalty(ys, prob, l)
        want = penalty_oracle(prob, prob.y0 + ys, l) - penalty_oracle(prob, prob.y0, l)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12 * penalty_oracle(prob, prob.y0, l))

    @pytest.mark.parametrize("l", L_VALUES)
    def test_finite_differences(self, rng, l):
        prob = random_problem(rng, l_scale=l)
        ys = rng.normal(size=(16, 16))
        d = rng.normal(size=(16, 16))
        _, g = support_penalty(ys, prob, l)
        h = 1e-4
        # quadratic, so the central difference is exact up to rounding
        fd = (support_penalty(ys + h * d, prob, l)[0] - support_penalty(ys - h * d, prob, l)[0]) / (2 * h)
        assert fd == pytest.approx(float(np.sum(g * d)), rel=1e-6)

    def test_in_support_pattern_costs_nothing(self):
        n = 32
        obj = np.zeros((n, n))
        obj[14:18, 13:18] = np.arange(20).reshape(4, 5) + 1.0
        y = np.abs(dft2(obj)) ** 2
        acs = autocorr_support(centered_square(n, 6))
        prob = HealProblem(np.zeros((n, n)), np.zeros((n, n), bool), hann_window(n, 1e-3, sym=False),
                           acs, taper_weights(acs, 0, 1.0), np.zeros((n, n)))
        v, g = support_penalty(np.fft.ifftshift(y), prob, 1.0)
        # the autocorrelation of the object sits inside the support
        scale = prob.penalty_base * np.sum(y**2)
        assert abs(v) <= 1e-20 * scale
        assert np.max(np.abs(g)) <= 1e-10 * prob.penalty_base * y.max()

    def test_no_penalty_zone(self, rng):
        n = 16
        acs = np.ones((n, n), bool)
        taper = np.zeros((n, n))
        prob = HealProblem(np.zeros((n, n)), np.zeros((n, n), bool), hann_window(n), acs, taper,
                           np.zeros((n, n)))
        v, g = support_penalty(rng.normal(size=(n, n)), prob, 1.0)
        assert v == 0.0 and not g.any()

    @pytest.mark.parametrize("t", [1e-12, 1e-6, 1.0])
    def test_prox_optimality(self, rng, t):
        prob = random_problem(rng)
        l = 0.5
        x = rng.normal(size=(16, 16))
        z, hz = support_prox(x, prob, l, t)
        # stationarity of h(y0 + z) + |z - x|**2 / (2 t), checked per frequency so that
        # the scale of each residual is that frequency's own terms
        n = prob.n
        c = 2.0 * t * n * n * np.fft.ifftshift(prob.penalty_taper) * prob.penalty_base / l
        zh, xh, a0 = np.fft.fft2(z), np.fft.fft2(x), np.fft.fft2(prob.y0)
        resid = np.abs(c * (a0 + zh) + zh - xh)
        assert np.all(resid <= 1e-12 * (np.abs(xh) + c * np.abs(a0) + np.abs(xh).max()))
        assert hz == pytest.approx(support_penalty(z, prob, l)[0], rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("l", L_VALUES)
def test_translation_invariance(rng, l):
    prob = random_problem(rng, l_scale=l)
    a = rng.normal(scale=0.2, size=(16, 16)) * prob.window.intensity
    b = rng.normal(scale=0.2, size=(16, 16)) * prob.window.intensity
    moved = prob.translated(prob.y0 + a)
    lhs, g1 = total_objective(b, moved, l)
    ab, g2 = total_objective(a + b, prob, l)
    aa, _ = total_objective(a, prob, l)
    assert lhs == pytest.approx(ab - aa, rel=1e-8, abs=1e-8 * (abs(ab) + abs(aa)))
    np.testing.assert_allclose(g1, g2, rtol=1e-8, atol=1e-8 * np.max(np.abs(g2)))


@pytest.mark.parametrize("weighting", ["poisson", "window"])
def test_convex_along_random_chords(rng, weighting):
    for l in L_VALUES:
        prob = random_problem(rng, l_scale=l, weighting=weighting)
        for _ in range(20):
            a = rng.normal(size=(16, 16))
            b = rng.normal(size=(16, 16))
            fa, _ = total_objective(a, prob, l)
            fb, _ = total_objective(b, prob, l)
            fm, _ = total_objective(0.5 * (a + b), prob, l)
            assert fm <= 0.5 * (fa + fb) + 1e-9 * (abs(fa) + abs(fb))


def test_problem_validation(rng):
    prob = random_problem(rng)
    with pytest.raises(ValueError):
        HealProblem(prob.counts, prob.beamstop, prob.window, prob.acsupport, prob.penalty_taper,
                    prob.y0, weighting="bogus")
    with pytest.raises(ValueError):
        HealProblem(-prob.counts - 1, prob.beamstop, prob.window, prob.acsupport,
                    prob.penalty_taper, prob.y0)
    with pytest.raises(ValueError):
        HealProblem(prob.counts, prob.beamstop, prob.window, prob.acsupport, prob.penalty_taper,
                    prob.y0, r=0.0)
    with pytest.raises(ValueError):
        data_objective(np.zeros((16, 16)), prob, 0.0)
