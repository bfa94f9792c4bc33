"""Command line entry point: ``coacs <subcommand> ...``.

Outputs default to subdirectories of ``$COACS_OUTPUT_ROOT`` (or
``./coacs-runs``).
"""

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .grid import autocorr_support, centered_square
from .gridio import file_digest, read_grid, write_grid
from .healing import HealConfig, heal
from .metrics import amplitudes
from .phasing import PhaseConfig, phase_ensemble
from .pipeline import (
    PRESETS,
    StageError,
    default_output_root,
    evaluate_variants,
    load_config,
    run_pipeline,
    write_heal_log,
    write_shell_csv,
    write_table_csv,
)
from .preview import TRANSFORMS, render_preview
from .simulate import simulate_dataset

log = logging.getLogger("coacs")


def _out_dir(args, name):
    return Path(args.out) if args.out else default_output_root() / name


def _digests(out, names):
    return {n: file_digest(out / n) for n in names}


def cmd_simulate(args):
    cfg = load_config(args.config, args.scale).simulate
    updates = {k: v for k, v in {
        "n": args.n, "photon_budget": args.photon_budget, "r": args.r,
        "beamstop_side": args.beamstop, "seed": args.seed, "patterns": args.patterns,
        "particle_scale": args.particle_scale,
    }.items() if v is not None}
    cfg = replace(cfg, **updates)
    out = _out_dir(args, "simulate")
    data = simulate_dataset(cfg)
    names = []
    for rel, grid in [("truth.grid", data["truth"]), ("projection.grid", data["projection"]),
                      ("beamstop.mask", data["beamstop"])] + \
            [(f"pattern_{k}.grid", p) for k, p in enumerate(data["patterns"])]:
        write_grid(out / rel, grid)
        names.append(rel)
    manifest = {"version": __version__, "config": cfg.to_dict(), "seeds": data["seeds"],
                "files": _digests(out, names)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(out)
    return 0


def cmd_heal(args):
    counts = read_grid(args.pattern)
    n = counts.shape[0]
    beamstop = read_grid(args.beamstop) if args.beamstop else np.zeros((n, n), bool)
    cfg = HealConfig()
    updates = {k: v for k, v in {
        "l_init": args.l_init, "l_min": args.l_min, "penalty_base": args.penalty,
        "tol": args.tol, "inner_iters": args.inner_iters,
        "max_inner_rounds": args.max_inner_rounds, "weighting": args.weighting,
        "r": args.r,
    }.items() if v is not None}
    cfg = replace(cfg, **updates)
    acs = autocorr_support(centered_square(n, args.support_side))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = heal(counts, beamstop, acs, cfg)
    for w in caught:
        log.warning("%s", w.message)
    out = _out_dir(args, "heal")
    write_grid(out / "healed.grid", res.unwindowed)
    write_grid(out / "healed_windowed.grid", res.windowed)
    write_heal_log(out / "heal_log.csv", res.log)
    print(out)
    return 0


def _split_named(spec):
    if "=" not in spec:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH[,PATH...], got {spec!r}")
    name, paths = spec.split("=", 1)
    return name, [p for p in paths.split(",") if p]


def cmd_phase(args):
    if args.amplitudes:
        amp = read_grid(args.amplitudes)
    else:
        amp = amplitudes(read_grid(args.intensities))
    n = amp.shape[0]
    free = read_grid(args.free_mask) if args.free_mask else None
    cfg = PhaseConfig(beta=args.beta, hio_iters=args.hio, er_iters=args.er,
                      replicates=args.replicates, keep_best=args.keep_best,
                      support_side=args.support_side, seed=args.seed, n_jobs=args.jobs)
    avg_amp, avg_obj, results = phase_ensemble(amp, free, cfg, centered_square(n, cfg.support_side))
    out = _out_dir(args, "phase")
    write_grid(out / "object.grid", avg_obj)
    write_grid(out / "amplitudes.grid", avg_amp)
    with open(out / "replicates.csv", "w") as fh:
        fh.write("seed,real_space_error\r\n")
        for r in results:
            fh.write(f"{r.seed},{r.real_space_error!r}\r\n")
    print(out)
    return 0


def cmd_evaluate(args):
    truth_amp = amplitudes(read_grid(args.truth))
    variants = {}
    for spec in args.amplitudes or []:
        name, paths = _split_named(spec)
        variants.setdefault(name, []).extend(read_grid(p) for p in paths)
    for spec in args.intensities or []:
        name, paths = _split_named(spec)
        variants.setdefault(name, []).extend(amplitudes(read_grid(p)) for p in paths)
    if not variants:
        raise SystemExit("evaluate: give at least one --amplitudes or --intensities")
    table, shells = evaluate_variants(truth_amp, variants)
    out = _out_dir(args, "evaluate")
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(out / "table_r_factors.csv", table)
    write_shell_csv(out / "shell_r_factors.csv", shells)
    for row in table:
        if row["pattern"] == "mean":
            print(f"{row['variant']}: R = {row['r_factor']:.4f} (std {row['std']:.4f})")
    return 0


def cmd_pipeline(args):
    overrides = {"simulate": {"patterns": args.patterns}} if args.patterns is not None else None
    config = load_config(args.config, args.scale, overrides)
    out = _out_dir(args, f"pipeline-{args.scale}")
    try:
        manifest = run_pipeline(config, out, force=args.force, jobs=args.jobs)
    except StageError as exc:
        log.error("%s", exc)
        return 2
    except FileExistsError as exc:
        log.error("%s", exc)
        return 3
    for stage, secs in manifest.timings.items():
        log.info("%-9s %8.1f s", stage, secs)
    print(out)
    return 0


def cmd_preview(args):
    grid = read_grid(args.grid)
    render_preview(grid, args.transform, args.out)
    print(args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="coacs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a particle and Poisson-sampled patterns")
    s.add_argument("--config", help="JSON or TOML config file")
    s.add_argument("--scale", choices=sorted(PRESETS), default="paper")
    s.add_argument("--n", type=int)
    s.add_argument("--photon-budget", type=float)
    s.add_argument("--r", type=float, help="quantum efficiency")
    s.add_argument("--beamstop", type=int, help="beamstop square side")
    s.add_argument("--seed", type=int)
    s.add_argument("--patterns", type=int)
    s.add_argument("--particle-scale", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    h = sub.add_parser("heal", help="heal one pattern")
    h.add_argument("--pattern", required=True, help="counts grid")
    h.add_argument("--beamstop", help="mask of missing pixels")
    h.add_argument("--support-side", type=int, default=31,
                   help="real-space support square; the autocorrelation support is 2s-1")
    h.add_argument("--l-init", type=float)
    h.add_argument("--l-min", type=float)
    h.add_argument("--penalty", type=float, help="support penalty numerator")
    h.add_argument("--tol", type=float)
    h.add_argument("--inner-iters", type=int)
    h.add_argument("--max-inner-rounds", type=int)
    h.add_argument("--weighting", choices=["poisson", "window"])
    h.add_argument("--r", type=float, help="quantum efficiency")
    h.add_argument("--out")
    h.set_defaults(func=cmd_heal)

    ph = sub.add_parser("phase", help="ensemble HIO + ER phasing")
    src = ph.add_mutually_exclusive_group(required=True)
    src.add_argument("--amplitudes")
    src.add_argument("--intensities")
    ph.add_argument("--support-side", type=int, default=31)
    ph.add_argument("--beta", type=float, default=0.9)
    ph.add_argument("--hio", type=int, default=50000)
    ph.add_argument("--er", type=int, default=10000)
    ph.add_argument("--replicates", type=int, default=100)
    ph.add_argument("--keep-best", type=int, default=10)
    ph.add_argument("--free-mask")
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--jobs", type=int, default=1)
    ph.add_argument("--out")
    ph.set_defaults(func=cmd_phase)

    e = sub.add_parser("evaluate", help="R factors against a truth intensity grid")
    e.add_argument("--truth", required=True, help="noise-free intensity grid")
    e.add_argument("--amplitudes", action="append", metavar="NAME=PATHS",
                   help="variant given as amplitude grids (repeatable)")
    e.add_argument("--intensities", action="append", metavar="NAME=PATHS",
                   help="variant given as intensity grids (repeatable)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("pipeline", help="simulate, heal, phase and evaluate")
    pl.add_argument("--config", help="JSON or TOML config file")
    pl.add_argument("--scale", choices=sorted(PRESETS), default="paper")
    pl.add_argument("--patterns", type=int, help="override the number of patterns")
    pl.add_argument("--jobs", type=int, default=1)
    pl.add_argument("--force", action="store_true", help="overwrite an existing run")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_pipeline)

    pv = sub.add_parser("preview", help="render a grid as an 8-bit PGM")
    pv.add_argument("--grid", required=True)
    pv.add_argument("--transform", choices=TRANSFORMS, default="log")
    pv.add_argument("--out", required=True)
    pv.set_defaults(func=cmd_preview)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
