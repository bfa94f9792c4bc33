import numpy as np
import pytest
import scipy.fft
from scipy import ndimage

from coacs.grid import centered_square, fftshift, ifftshift
from coacs.phasing import (
    PhaseConfig,
    align_to,
    fourier_projection,
    phase_ensemble,
    phase_single,
)
from coacs.simulate import Particle, diffract, project_particle


@pytest.fixture(scope="module")
def particle64():
    proj = project_particle(Particle.scaled(0.5, sphere_density=1.0), 64)
    return proj, np.sqrt(diffract(proj))


def rel_l2(recovered, truth):
    aligned = align_to(truth.astype(complex), recovered)
    return np.linalg.norm(aligned - truth) / np.linalg.norm(truth)


def test_known_phases_are_a_fixed_point(particle64):
    proj, amp = particle64
    phases = np.angle(fftshift(scipy.fft.fft2(proj)))
    cfg = PhaseConfig(hio_iters=0, er_iters=20, replicates=1, keep_best=1)
    res = phase_single(amp, config=cfg, support=proj > 0, initial_phases=phases)
    assert res.real_space_error <= 1e-10
    assert np.max(np.abs(res.real_space - proj)) <= 1e-10 * proj.max()


def test_recovers_particle_best_of_20(particle64):
    proj, amp = particle64
    support = ndimage.binary_dilation(proj > 0, iterations=1)
    cfg = PhaseConfig(hio_iters=500, er_iters=200, replicates=20, keep_best=1)
    _, _, results = phase_ensemble(amp, config=cfg, support=support)
    assert min(rel_l2(r.real_space, proj) for r in results) <= 0.05


def test_all_free_collapses_into_support(rng):
    n = 16
    amp = rng.random((n, n))
    support = centered_square(n, 4)
    cfg = PhaseConfig(hio_iters=0, er_iters=3, replicates=1, keep_best=1)
    res = phase_single(amp, np.ones((n, n), bool), cfg, seed=1, support=support)
    assert np.all(res.real_space[~support] == 0)
    # the projection is an FFT round trip, so only rounding survives outside
    assert res.real_space_error <= 1e-14


def test_er_error_is_monotone(particle64):
    proj, amp = particle64
    cfg = PhaseConfig(hio_iters=50, er_iters=200, replicates=1, keep_best=1)
    res = phase_single(amp, config=cfg, seed=3, support=centered_square(64, 16), track_error=True)
    h = res.error_history
    assert len(h) == 200
    assert np.all(np.diff(h) <= 1e-12)
    assert res.real_space_error >= 0


def test_fourier_projection_is_exact(rng):
    n = 12
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    amp = rng.random((n, n))
    free = rng.random((n, n)) < 0.2
    G = scipy.fft.fft2(fourier_projection(g, amp, free))
    np.testing.assert_allclose(np.abs(G)[~free], amp[~free], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(G[free], scipy.fft.fft2(g)[free], rtol=1e-12, atol=1e-12)


def test_zero_modulus_takes_measured_amplitude():
    g = np.zeros((4, 4), complex)
    amp = np.full((4, 4), 2.0)
    G = scipy.fft.fft2(fourier_projection(g, amp, np.zeros((4, 4), bool)))
    np.testing.assert_allclose(G, 2.0)


class TestAlign:
    def test_undoes_shift_twin_and_phase(self, rng):
        n = 16
        ref = np.zeros((n, n), complex)
        ref[5:9, 4:10] = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
        twin = np.conj(np.roll(ref[::-1, ::-1], 1, axis=(0, 1)))
        moved = np.roll(twin, (3, -2), axis=(0, 1)) * np.exp(0.7j)
        np.testing.assert_allclose(align_to(ref, moved), ref, atol=1e-12)

    def test_identity(self, rng):
        g = rng.normal(size=(8, 8)) + 0j
        np.testing.assert_allclose(align_to(g, g), g, atol=1e-12)


def test_single_replicate_is_returned_unchanged(particle64):
    _, amp = particle64
    cfg = PhaseConfig(hio_iters=10, er_iters=5, replicates=1, keep_best=1, support_side=16, seed=4)
    avg_amp, avg_obj, results = phase_ensemble(amp, config=cfg)
    assert len(results) == 1
    assert np.array_equal(avg_obj, results[0].real_space)
    assert np.array_equal(avg_amp, results[0].amplitudes)


def test_deterministic_and_seeded(particle64):
    _, amp = particle64
    cfg = PhaseConfig(hio_iters=20, er_iters=5, replicates=3, keep_best=2, support_side=16, seed=7)
    a = phase_ensemble(amp, config=cfg)
    b = phase_ensemble(amp, config=cfg)
    assert np.array_equal(a[1], b[1])
    assert sorted(r.seed for r in a[2]) == [7, 8, 9]


def test_parallel_matches_serial(particle64):
    _, amp = particle64
    cfg = PhaseConfig(hio_iters=20, er_iters=5, replicates=3, keep_best=2, support_side=16)
    serial = phase_ensemble(amp, config=cfg)
    par = phase_ensemble(amp, config=PhaseConfig(**{**cfg.to_dict(), "n_jobs": 2}))
    assert np.array_equal(serial[1], par[1])


def test_beamstop_pixels_left_free(particle64):
    _, amp = particle64
    free = centered_square(64, 5)
    cfg = PhaseConfig(hio_iters=30, er_iters=10, replicates=1, keep_best=1, support_side=16)
    res = phase_single(amp, free, cfg, seed=0)
    assert np.isfinite(res.real_space_error)
    assert res.amplitudes.shape == amp.shape


@pytest.mark.parametrize("kw", [{"beta": 0.0}, {"beta": 1.5}, {"keep_best": 0},
                                {"keep_best": 200}, {"hio_iters": -1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PhaseConfig(**kw)


def test_rejects_negative_amplitudes():
    with pytest.raises(ValueError):
        phase_single(-np.ones((8, 8)), config=PhaseConfig(support_side=2, replicates=1, keep_best=1))


def test_layout_round_trip():
    a = np.arange(25.0).reshape(5, 5)
    assert np.array_equal(ifftshift(fftshift(a)), a)
