"""Synthetic single-particle diffraction data.

The test object is the projected density of an icosahedron with a small,
much denser sphere sitting on one of its vertices. Its far-field intensity is
the squared modulus of the discrete Fourier transform of the projection,
scaled to a photon budget and Poisson sampled; a centred square beamstop
removes the low-angle pixels.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from ._validation import check_grid
from .grid import center_index, centered_square, dft2, fftshift

__all__ = [
    "Particle",
    "SimConfig",
    "apply_beamstop",
    "calibrate_intensity",
    "diffract",
    "icosahedron_vertices",
    "poisson_sample",
    "project_particle",
    "simulate_dataset",
]

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def icosahedron_vertices(circumdiameter=1.0):
    """The 12 vertices of an icosahedron centred at the origin.

    Vertex-to-opposite-vertex distance equals ``circumdiameter``.
    """
    v = []
    for a in (-1.0, 1.0):
        for b in (-GOLDEN, GOLDEN):
            v += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    v = np.array(v)
    return v * (circumdiameter / 2.0) / np.linalg.norm(v[0])


def _default_orientation():
    # rotate the vertex (0, 1, golden) onto +x
    v = icosahedron_vertices()[1]
    rot, _ = Rotation.align_vectors([[1.0, 0.0, 0.0]], [v / np.linalg.norm(v)])
    return tuple(rot.as_quat())


@dataclass
class Particle:
    """Icosahedron plus dense sphere, all lengths in detector-conjugate pixels.

    ``orientation`` is a unit quaternion (x, y, z, w) applied to the
    icosahedron; ``sphere_offset`` is the sphere centre relative to the
    particle centre, in 3D. By default the sphere sits on the vertex that the
    default orientation places at +x.
    """

    circumdiameter: float = 20.0
    orientation: tuple = field(default_factory=_default_orientation)
    density: float = 1.0
    sphere_diameter: float = 4.0
    sphere_offset: tuple = None
    sphere_density: float = 50.0

    def __post_init__(self):
        if self.circumdiameter <= 0 or self.sphere_diameter <= 0:
            raise ValueError("particle diameters must be positive")
        if self.density <= 0 or self.sphere_density <= 0:
            raise ValueError("particle densities must be positive")
        if self.sphere_offset is None:
            self.sphere_offset = (self.circumdiameter / 2.0, 0.0, 0.0)
        self.orientation = tuple(float(q) for q in self.orientation)
        self.sphere_offset = tuple(float(s) for s in self.sphere_offset)

    def rotated_vertices(self):
        rot = Rotation.from_quat(self.orientation)
        return rot.apply(icosahedron_vertices(self.circumdiameter))

    def planar_extent(self):
        """Largest in-plane distance from the particle centre to any of its matter."""
        ico = self.circumdiameter / 2.0
        sx, sy, _ = self.sphere_offset
        return max(ico, np.hypot(sx, sy) + self.sphere_diameter / 2.0)

    @classmethod
    def scaled(cls, factor, **kwargs):
        """The default particle with every length multiplied by ``factor``."""
        return cls(circumdiameter=20.0 * factor, sphere_diameter=4.0 * factor, **kwargs)


def _slab_chords(px, py, normals, offsets):
    """Length of the z-ray through each (px, py) inside ``normals . p + offsets <= 0``."""
    t_lo = np.full(px.shape, -np.inf)
    t_hi = np.full(px.shape, np.inf)
    inside = np.ones(px.shape, dtype=bool)
    for (nx, ny, nz), b in zip(normals, offsets):
        rhs = -b - nx * px - ny * py
        if nz > 1e-12:
            t_hi = np.minimum(t_hi, rhs / nz)
        elif nz < -1e-12:
            t_lo = np.maximum(t_lo, rhs / nz)
        else:
            inside &= rhs >= 0
    return np.where(inside, np.clip(t_hi - t_lo, 0.0, None), 0.0)


def project_particle(particle, n):
    """Projected density of ``particle`` along z, sampled at pixel centres.

    The particle centre sits on the grid centre. The icosahedron chord at each
    pixel is the overlap of the ray with the 20 face half-spaces; the sphere
    adds ``2 sqrt(r**2 - d**2)`` times its density.
    """
    n = int(n)
    if particle.planar_extent() >= n / 4.0:
        raise ValueError(
            f"particle extent {particle.planar_extent():.3g} px does not leave "
            f"room for 2x oversampling on a {n}x{n} grid"
        )
    c = center_index(n)
    coords = np.arange(n, dtype=np.float64) - c
    py, px = np.meshgrid(coords, coords, indexing="ij")

    hull = ConvexHull(particle.rotated_vertices())
    eq = hull.equations
    ico = _slab_chords(px, py, eq[:, :3], eq[:, 3])

    rad = particle.sphere_diameter / 2.0
    sx, sy, _ = particle.sphere_offset
    d2 = (px - sx) ** 2 + (py - sy) ** 2
    sphere = 2.0 * np.sqrt(np.clip(rad * rad - d2, 0.0, None))
    return particle.density * ico + particle.sphere_density * sphere


def diffract(projection):
    """Noise-free far-field intensity ``|dft2(P)|**2`` with DC at the grid centre."""
    projection = check_grid(projection, "projection")
    if np.any(projection < 0):
        raise ValueError("projection must be non-negative")
    return fftshift(np.abs(dft2(projection)) ** 2)


def poisson_sample(intensity, r=1.0, seed=0):
    """Photon counts ``B ~ Po(r * Y)`` per pixel, as a float64 grid.

    Draws come from numpy's PCG64 generator seeded with ``seed`` and are
    taken in row-major order, so a given (intensity, r, seed) always yields
    the same counts.
    """
    intensity = check_grid(intensity, "intensity")
    if np.any(intensity < 0):
        raise ValueError("intensity must be non-negative")
    if not r > 0:
        raise ValueError(f"quantum efficiency must be positive, got {r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.poisson(r * intensity).astype(np.float64)


def apply_beamstop(counts, side):
    """Zero a centred ``side`` x ``side`` square and return it as the missing-data mask."""
    counts = check_grid(counts, "counts")
    n = counts.shape[0]
    if side >= n:
        raise ValueError(f"beamstop side {side} must be smaller than the grid side {n}")
    if side <= 0:
        return counts.copy(), np.zeros((n, n), dtype=bool)
    mask = centered_square(n, side)
    out = counts.copy()
    out[mask] = 0.0
    return out, mask


def calibrate_intensity(intensity, photon_budget, r=1.0, beamstop=None):
    """Rescale ``intensity`` so the expected photons outside the beamstop equal the budget."""
    keep = np.ones(intensity.shape, dtype=bool) if beamstop is None else ~beamstop
    total = r * intensity[keep].sum()
    if total <= 0:
        raise ValueError("intensity has no signal outside the beamstop")
    return intensity * (photon_budget / total)


@dataclass
class SimConfig:
    """Detector and sampling parameters for one simulated dataset."""

    n: int = 256
    photon_budget: float = 10000.0
    r: float = 1.0
    beamstop_side: int = 25
    seed: int = 0
    patterns: int = 50
    particle_scale: float = 1.0

    def __post_init__(self):
        if self.photon_budget <= 0:
            raise ValueError("photon_budget must be positive")
        if not self.r > 0:
            raise ValueError("quantum efficiency r must be positive")
        if not 0 <= self.beamstop_side < self.n:
            raise ValueError("beamstop_side must be in [0, n)")
        if self.patterns < 1:
            raise ValueError("patterns must be at least 1")

    def to_dict(self):
        return asdict(self)


def simulate_dataset(config, particle=None):
    """Truth intensity, beamstop mask and ``config.patterns`` Poisson samplings.

    Pattern ``k`` is drawn with seed ``config.seed + k``. The truth grid is
    the calibrated, unwindowed intensity; ``r * truth`` summed outside the
    beamstop equals ``config.photon_budget``.
    """
    if particle is None:
        particle = Particle.scaled(config.particle_scale)
    projection = project_particle(particle, config.n)
    _, beamstop = apply_beamstop(np.zeros((config.n, config.n)), config.beamstop_side)
    truth = calibrate_intensity(diffract(projection), config.photon_budget, config.r, beamstop)
    patterns = []
    for k in range(config.patterns):
        counts = poisson_sample(truth, config.r, seed=config.seed + k)
        counts, _ = apply_beamstop(counts, config.beamstop_side)
        patterns.append(counts)
    return {
        "projection": projection,
        "truth": truth,
        "beamstop": beamstop,
        "patterns": patterns,
        "seeds": [config.seed + k for k in range(config.patterns)],
    }
