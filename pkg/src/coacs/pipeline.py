"""Simulate, heal, phase and evaluate in one reproducible run.

A run directory holds every grid written along the way, the R-factor tables
and a ``manifest.json`` with the configuration, seeds, per-stage timings and
SHA-256 digests of all outputs.
"""

import csv
import json
import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .grid import autocorr_support, centered_square
from .gridio import file_digest, read_grid, write_grid
from .healing import HealConfig, heal
from .metrics import amplitudes, r_factor, radial_r_factor
from .phasing import PhaseConfig, phase_ensemble
from .preview import render_preview
from .simulate import SimConfig, simulate_dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "OUTPUT_ROOT_ENV",
    "PRESETS",
    "PipelineConfig",
    "RunManifest",
    "StageError",
    "VARIANTS",
    "default_output_root",
    "evaluate_variants",
    "load_config",
    "run_pipeline",
    "write_shell_csv",
    "write_table_csv",
]

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "COACS_OUTPUT_ROOT"
VARIANTS = ("raw-phased", "healed-phased", "healed-direct")


def default_output_root():
    """Directory for run outputs: ``$COACS_OUTPUT_ROOT`` or ``./coacs-runs``."""
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "coacs-runs"))


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    """Configuration of a full run, one section per stage.

    ``heal_support_side`` is the real-space square used to derive the
    autocorrelation support (side ``2 s - 1``); the phasing support is
    ``phase.support_side``.
    """

    simulate: SimConfig = field(default_factory=SimConfig)
    heal: HealConfig = field(default_factory=HealConfig)
    heal_support_side: int = 31
    phase: PhaseConfig = field(default_factory=PhaseConfig)

    def to_dict(self):
        return {
            "simulate": self.simulate.to_dict(),
            "heal": {"support_side": self.heal_support_side, **self.heal.to_dict()},
            "phase": self.phase.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        data = {k: dict(v) for k, v in data.items()}
        unknown = set(data) - {"simulate", "heal", "phase"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        heal_sec = data.get("heal", {})
        side = heal_sec.pop("support_side", 31)
        return cls(
            simulate=_build(SimConfig, data.get("simulate", {}), "simulate"),
            heal=_build(HealConfig, heal_sec, "heal"),
            heal_support_side=int(side),
            phase=_build(PhaseConfig, data.get("phase", {}), "phase"),
        )


def _build(cls, values, section):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**values)


PRESETS = {
    "paper": {},
    "desk": {
        "simulate": {"n": 128, "beamstop_side": 13, "patterns": 5, "particle_scale": 0.5},
        "heal": {"support_side": 16, "inner_iters": 150, "max_inner_rounds": 2},
        "phase": {"support_side": 16, "hio_iters": 5000, "er_iters": 1000,
                  "replicates": 10, "keep_best": 10},
    },
}


def _merge(base, update):
    out = {k: dict(v) for k, v in base.items()}
    for section, values in update.items():
        out.setdefault(section, {}).update(values)
    return out


def load_config(path=None, scale="paper", overrides=None):
    """Preset ``scale``, then the JSON/TOML file at ``path``, then ``overrides``."""
    if scale not in PRESETS:
        raise ValueError(f"unknown scale {scale!r}; choose from {sorted(PRESETS)}")
    data = _merge({}, PRESETS[scale])
    if path is not None:
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            loaded = tomllib.loads(text)
        else:
            loaded = json.loads(text)
        data = _merge(data, loaded)
    if overrides:
        data = _merge(data, overrides)
    return PipelineConfig.from_dict(data)


@dataclass
class RunManifest:
    """Everything needed to audit and repeat a run."""

    config: dict
    seeds: dict
    version: str = __version__
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    heal_stats: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, root):
        """Names of listed files that are missing or whose digest changed."""
        root = Path(root)
        bad = []
        for rel, digest in self.files.items():
            p = root / rel
            if not p.exists() or file_digest(p) != digest:
                bad.append(rel)
        return bad


def evaluate_variants(truth_amp, variants):
    """R factors per variant and pattern, plus pattern-averaged shell curves.

    ``variants`` maps a variant name to a list of recovered amplitude grids.
    Returns ``(table_rows, shell_rows)``; the table has one row per pattern
    and a ``mean`` row carrying the standard deviation over patterns.
    """
    table, shells = [], []
    for name, amps in variants.items():
        values = [r_factor(a, truth_amp) for a in amps]
        for k, v in enumerate(values):
            table.append({"variant": name, "pattern": str(k), "r_factor": v, "std": ""})
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        table.append({"variant": name, "pattern": "mean",
                      "r_factor": float(np.mean(values)), "std": std})
        profiles = [radial_r_factor(a, truth_amp) for a in amps]
        curves = np.array([p.r_factors for p in profiles])
        for i, radius in enumerate(profiles[0].radii):
            col = curves[:, i]
            if np.all(np.isnan(col)):
                continue
            shells.append({"variant": name, "radius": int(radius),
                           "r_factor": float(np.nanmean(col)),
                           "pixels": int(profiles[0].counts[i])})
    return table, shells


def _write_csv(path, rows, header):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_table_csv(path, rows):
    _write_csv(path, rows, ["variant", "pattern", "r_factor", "std"])


def write_shell_csv(path, rows):
    _write_csv(path, rows, ["variant", "radius", "r_factor", "pixels"])


def write_heal_log(path, rows):
    _write_csv(path, rows, ["outer", "l", "inner_rounds", "objective_change", "support_leakage"])


def _heal_one(counts, beamstop, acsupport, config):
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        return heal(counts, beamstop, acsupport, config)


class _Stage:
    def __init__(self, name, manifest):
        self.name, self.manifest = name, manifest

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, f"{exc_type.__name__}: {exc}") from exc
        return False


def run_pipeline(config, out_dir, force=False, jobs=1):
    """Run every stage and write the artifacts under ``out_dir``.

    Refuses to touch a directory that already holds a manifest unless
    ``force`` is set. ``jobs`` parallelizes healing over patterns and
    phasing over replicates; results do not depend on it. Returns the
    :class:`RunManifest`.
    """
    if isinstance(config, dict):
        config = PipelineConfig.from_dict(config)
    out = Path(out_dir)
    if (out / "manifest.json").exists() and not force:
        raise FileExistsError(f"{out} already holds a run; pass force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    sim = config.simulate
    phase_cfg = PhaseConfig(**{**config.phase.to_dict(), "n_jobs": jobs})
    manifest = RunManifest(
        config=config.to_dict(),
        seeds={"patterns": [sim.seed + k for k in range(sim.patterns)],
               "phase_replicates": [phase_cfg.seed + i for i in range(phase_cfg.replicates)]},
    )
    written = []

    def save(rel, grid, dtype=None):
        write_grid(out / rel, grid, dtype)
        written.extend([rel, rel + ".json"])

    with _Stage("simulate", manifest):
        data = simulate_dataset(sim)
        truth, beamstop, patterns = data["truth"], data["beamstop"], data["patterns"]
        save("truth.grid", truth)
        save("projection.grid", data["projection"])
        save("beamstop.mask", beamstop)
        for k, p in enumerate(patterns):
            save(f"pattern_{k}.grid", p)

    with _Stage("heal", manifest):
        acs = autocorr_support(centered_square(sim.n, config.heal_support_side))
        if jobs == 1:
            healed = [_heal_one(p, beamstop, acs, config.heal) for p in patterns]
        else:
            healed = Parallel(n_jobs=jobs)(
                delayed(_heal_one)(p, beamstop, acs, config.heal) for p in patterns)
        for k, res in enumerate(healed):
            save(f"healed_{k}.grid", res.unwindowed)
            save(f"healed_windowed_{k}.grid", res.windowed)
            write_heal_log(out / f"heal_log_{k}.csv", res.log)
            written.append(f"heal_log_{k}.csv")
            manifest.heal_stats.append({
                "pattern": k,
                "iterations": res.iterations,
                "endpoint_increases": res.endpoint_increases,
                "rejected_extrapolations": res.rejected_extrapolations,
                "unconverged_levels": res.unconverged_levels,
            })

    variants = {name: [] for name in VARIANTS}
    with _Stage("phase", manifest):
        support = centered_square(sim.n, phase_cfg.support_side)
        for k in range(sim.patterns):
            inputs = (("raw", amplitudes(patterns[k]), beamstop),
                      ("healed", amplitudes(healed[k].unwindowed), None))
            for tag, amp, free in inputs:
                avg_amp, avg_obj, results = phase_ensemble(amp, free, phase_cfg, support)
                save(f"phased_{tag}_{k}_amplitudes.grid", avg_amp)
                save(f"phased_{tag}_{k}_object.grid", avg_obj)
                rows = [{"seed": r.seed, "real_space_error": r.real_space_error} for r in results]
                _write_csv(out / f"phased_{tag}_{k}_replicates.csv", rows,
                           ["seed", "real_space_error"])
                written.append(f"phased_{tag}_{k}_replicates.csv")
                variants[f"{tag}-phased"].append(avg_amp)
            variants["healed-direct"].append(amplitudes(healed[k].unwindowed))

    with _Stage("evaluate", manifest):
        table, shells = evaluate_variants(amplitudes(truth), variants)
        write_table_csv(out / "table_r_factors.csv", table)
        write_shell_csv(out / "shell_r_factors.csv", shells)
        written.extend(["table_r_factors.csv", "shell_r_factors.csv"])

    with _Stage("preview", manifest):
        previews = {
            "truth_log.pgm": (truth, "log"),
            "pattern_0_log.pgm": (patterns[0], "log"),
            "healed_0_log.pgm": (healed[0].unwindowed, "log"),
            "healed_windowed_0_derooted.pgm": (healed[0].windowed, "derooted-window"),
            "phased_healed_0_log.pgm": (variants["healed-phased"][0] ** 2, "log"),
            "phased_raw_0_log.pgm": (variants["raw-phased"][0] ** 2, "log"),
        }
        for name, (grid, transform) in previews.items():
            window = healed[0].window if transform == "derooted-window" else None
            render_preview(grid, transform, out / name, window=window)
            written.append(name)

    manifest.files = {rel: file_digest(out / rel) for rel in written}
    manifest.write(out / "manifest.json")
    return manifest


def load_run(out_dir):
    """Read back the grids and tables of a finished run."""
    out = Path(out_dir)
    manifest = RunManifest.read(out / "manifest.json")
    with open(out / "table_r_factors.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    with open(out / "shell_r_factors.csv", newline="") as fh:
        shells = list(csv.DictReader(fh))
    return {"manifest": manifest, "table": table, "shells": shells,
            "truth": read_grid(out / "truth.grid")}
