import hashlib
import os
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coacs.grid import autocorr_support, centered_square, hann_window, taper_weights
from coacs.objective import HealProblem

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src" / "coacs"


def source_hash():
    """Digest of the package sources; cached long runs are keyed on it."""
    h = hashlib.sha256()
    for path in sorted(SRC.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def cache_dir(name):
    base = Path(os.environ.get("COACS_TEST_CACHE", ROOT / ".pytest_cache" / "coacs"))
    return base / f"{name}-{source_hash()}"


def random_problem(rng, n=16, l_scale=1.0, beamstop_side=3, support_side=4,
                   weighting="poisson"):
    """Small random healing problem with an offset inside the relevant range."""
    intensity = rng.gamma(0.7, 3.0, size=(n, n))
    counts = rng.poisson(intensity).astype(np.float64)
    beamstop = centered_square(n, beamstop_side) if beamstop_side else np.zeros((n, n), bool)
    window = hann_window(n, 1e-3, sym=False)
    acs = autocorr_support(centered_square(n, support_side))
    taper = taper_weights(acs, 2, 1.0)
    y0 = window.intensity * rng.uniform(0.0, 2.0 * l_scale + 1.0, size=(n, n))
    return HealProblem(counts, beamstop, window, acs, taper, y0, weighting=weighting)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_unconverged():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="inner continuation hit max_inner_rounds")
        yield


def pytest_configure(config):
    config._acceptance = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
