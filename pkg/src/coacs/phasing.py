"""HIO + ER phase retrieval with ensemble selection and registration.

Amplitude grids use the detector layout (zero frequency at the grid centre).
Real-space iterates are complex and live on the natural grid; the support
is a mask in that grid, by default a centred square.
"""

from dataclasses import asdict, dataclass

import numpy as np
import scipy.fft
from joblib import Parallel, delayed

from ._validation import check_grid, check_mask
from .grid import centered_square, fftshift, ifftshift

__all__ = [
    "PhaseConfig",
    "PhaseResult",
    "align_to",
    "fourier_projection",
    "phase_ensemble",
    "phase_single",
]


@dataclass
class PhaseConfig:
    beta: float = 0.9
    hio_iters: int = 50000
    er_iters: int = 10000
    replicates: int = 100
    keep_best: int = 10
    support_side: int = 31
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.hio_iters < 0 or self.er_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if not 1 <= self.keep_best <= self.replicates:
            raise ValueError("need 1 <= keep_best <= replicates")

    def to_dict(self):
        return asdict(self)


@dataclass
class PhaseResult:
    real_space: np.ndarray
    amplitudes: np.ndarray
    real_space_error: float
    seed: int
    error_history: np.ndarray = None


def fourier_projection(g, amp, free):
    """Impose ``amp`` on the Fourier modulus of ``g`` except at ``free`` pixels.

    ``amp`` and ``free`` are in DFT layout. Pixels with zero modulus take the
    measured amplitude with zero phase.
    """
    G = scipy.fft.fft2(g)
    mod = np.abs(G)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(mod > 0, G / mod, 1.0)
    G = np.where(free, G, amp * unit)
    return scipy.fft.ifft2(G)


def _real_space_error(gF, support):
    total = np.vdot(gF, gF).real
    if total == 0:
        return 0.0
    outside = gF[~support]
    return float(np.sqrt(np.vdot(outside, outside).real / total))


def phase_single(amplitudes, free_mask=None, config=None, seed=0, support=None,
                 initial_phases=None, track_error=False):
    """One HIO run followed by ER from random phases.

    HIO keeps the Fourier-projected iterate inside the support and feeds
    back ``g - beta * g_F`` outside it; ER zeroes the outside. The reported
    error is ``|g_F outside support| / |g_F|`` of the last projection.
    ``initial_phases`` (detector layout) replaces the random start.
    """
    config = config or PhaseConfig()
    amplitudes = check_grid(amplitudes, "amplitudes")
    if np.any(amplitudes < 0):
        raise ValueError("amplitudes must be non-negative")
    n = amplitudes.shape[0]
    free = np.zeros((n, n), bool) if free_mask is None else check_mask(free_mask, "free_mask", n=n)
    if support is None:
        support = centered_square(n, config.support_side)
    support = check_mask(support, "support", n=n, nonempty=True)

    amp = ifftshift(amplitudes)
    free_d = ifftshift(free)
    if initial_phases is None:
        rng = np.random.Generator(np.random.PCG64(seed))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, n))
    else:
        phases = ifftshift(np.asarray(initial_phases, dtype=np.float64))
    g = scipy.fft.ifft2(amp * np.exp(1j * phases))

    outside = ~support
    beta = config.beta
    history = [] if track_error else None
    gF = g
    for _ in range(config.hio_iters):
        gF = fourier_projection(g, amp, free_d)
        g = np.where(support, gF, g - beta * gF)
    for _ in range(config.er_iters):
        gF = fourier_projection(g, amp, free_d)
        if track_error:
            history.append(_real_space_error(gF, support))
        g = np.where(outside, 0.0, gF)
    if config.hio_iters + config.er_iters == 0:
        gF = fourier_projection(g, amp, free_d)
    err = _real_space_error(gF, support)
    return PhaseResult(
        real_space=g,
        amplitudes=fftshift(np.abs(scipy.fft.fft2(g))),
        real_space_error=err,
        seed=seed,
        error_history=None if history is None else np.array(history),
    )


def _twin(g):
    # conj(g(-x)) on the periodic grid; same Fourier modulus as g
    return np.conj(np.roll(g[::-1, ::-1], 1, axis=(0, 1)))


def align_to(reference, g):
    """Shift, twin-flip and rephase ``g`` to best match ``reference``.

    Tries ``g`` and its point-reflected conjugate, picks the integer circular
    shift maximizing ``|cross-correlation|``, and applies the global phase of
    the correlation peak.
    """
    R = scipy.fft.fft2(reference)
    best = None
    for cand in (g, _twin(g)):
        xc = scipy.fft.ifft2(R * np.conj(scipy.fft.fft2(cand)))
        idx = np.unravel_index(np.argmax(np.abs(xc)), xc.shape)
        peak = xc[idx]
        if best is None or abs(peak) > abs(best[0]):
            best = (peak, idx, cand)
    peak, (dy, dx), cand = best
    shifted = np.roll(cand, (dy, dx), axis=(0, 1))
    phase = peak / abs(peak) if abs(peak) > 0 else 1.0
    return shifted * phase


def phase_ensemble(amplitudes, free_mask=None, config=None, support=None):
    """Run ``replicates`` phasings, keep the ``keep_best`` lowest-error ones, align and average.

    Returns ``(averaged_amplitudes, averaged_object, results)`` where
    ``results`` lists every replicate sorted by real-space error.
    """
    config = config or PhaseConfig()
    seeds = [config.seed + i for i in range(config.replicates)]
    if config.n_jobs == 1:
        results = [phase_single(amplitudes, free_mask, config, s, support) for s in seeds]
    else:
        results = Parallel(n_jobs=config.n_jobs)(
            delayed(phase_single)(amplitudes, free_mask, config, s, support) for s in seeds
        )
    results.sort(key=lambda res: (res.real_space_error, res.seed))
    best = results[: config.keep_best]
    ref = best[0].real_space
    acc = ref.copy()
    for res in best[1:]:
        acc += align_to(ref, res.real_space)
    avg = acc / len(best)
    if len(best) == 1:
        avg = ref
    avg_amp = fftshift(np.abs(scipy.fft.fft2(avg)))
    return avg_amp, avg, results
