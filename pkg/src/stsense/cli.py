"""Command line interface: ``stsense {synth,train,classify,reconstruct,eval}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config
from .exceptions import ConvergenceError, DataError, StsenseError
from .harness import SAMPLES_MODES, classification_sweep, sample_measurements, train_models
from .library import build_library, classify, load_library, model_for, save_library
from .reduction import build_regime_model
from .sensing import build_phi, load_measurements, place_sensors, reconstruct_amplitudes, save_measurements
from .sensing import reconstruct_field
from .snapshot import SnapshotMatrix, TimeGrid, load_snapshots, save_snapshots
from .synth import default_preset, generate, load_specs, save_specs, with_noise

log = logging.getLogger("stsense")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4


class UsageError(StsenseError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _out(args, default) -> Path:
    return Path(args.out if args.out is not None else default)


def _specs(args, cfg):
    specs = load_specs(args.specs) if args.specs else default_preset(seed=cfg.preset_seed)
    return specs


def _measurements(path, n_space):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except FileNotFoundError:
        raise DataError(f"measurement file {path} not found") from None
    if len(rows) <= 1:
        raise UsageError(f"{path}: no measurements; at least one row after the header is required")
    return load_measurements(path, n_space)


# --- subcommands -----------------------------------------------------------

def cmd_synth(args, cfg: Config) -> int:
    specs = _specs(args, cfg)
    if args.off_bin:
        specs = [s.__class__(**{**s.to_dict(), "off_bin": True}) for s in specs]
    if args.train_noise:
        specs = with_noise(specs, args.train_noise)
    out = _out(args, "data")
    out.mkdir(parents=True, exist_ok=True)
    save_specs(specs, out / "specs.json")
    for s in specs:
        save_snapshots(generate(s), out / f"{s.label}.spsn")
        print(f"wrote {out / (s.label + '.spsn')}")
    if args.measure is not None:
        labels = [s.label for s in specs]
        if args.measure not in labels:
            raise UsageError(f"--measure {args.measure!r} is not one of {labels}")
        spec = specs[labels.index(args.measure)]
        models = train_models(specs, cfg.spatial_energy, cfg.spacetime_energy, cfg.energy)
        sensors = place_sensors(models, cfg.sensor_count).indices
        rng = np.random.default_rng([cfg.seed, 0])
        meas = sample_measurements(spec, sensors, cfg.time_sample_count, rng, cfg.samples_mode, cfg.phase_offset)
        if args.noise_std:
            meas = meas.with_values(meas.value + args.noise_std * rng.standard_normal(len(meas)))
        save_measurements(meas, out / "measurements.csv")
        print(f"wrote {out / 'measurements.csv'} ({len(meas)} samples of regime {spec.label})")
    return EXIT_OK


def _alpha_table(models) -> str:
    lines = [f"{'regime':>8} {'rank':>5} {'terms':>6} {'energy':>8}  leading alpha^2 fractions"]
    for m in models:
        fr = [t.alpha_sq / m.total_alpha_sq for t in m.terms[:4]]
        lines.append(
            f"{m.label:>8} {m.rank:>5} {m.n_terms:>6} {m.energy_captured:>8.4f}  "
            + " ".join(f"{f:.3f}" for f in fr)
        )
    return "\n".join(lines)


def cmd_train(args, cfg: Config) -> int:
    if not args.snapshots:
        raise UsageError("train needs at least two snapshot files")
    models = []
    for path in args.snapshots:
        mat = load_snapshots(path)
        label = mat.regime_label if mat.regime_label is not None else Path(path).stem
        models.append(build_regime_model(mat, cfg.spatial_energy, cfg.spacetime_energy, cfg.energy, label))
    out = save_library(models, _out(args, "library"))
    print(_alpha_table(models))
    print(f"library written to {out}")
    return EXIT_OK


def _budget(cfg, delta, p):
    d = cfg.delta if delta is None else delta
    return d * float(np.linalg.norm(p)) if cfg.relative_delta else d


def cmd_classify(args, cfg: Config) -> int:
    lib = load_library(args.library)
    meas = _measurements(args.measurements, lib.n_space)
    _, psi = build_library(lib, meas)
    res = classify(lib, psi, meas.value, _budget(cfg, args.delta, meas.value))
    report = res.to_dict(lib.labels)
    report["delta"] = cfg.delta if args.delta is None else args.delta
    report["relative_delta"] = cfg.relative_delta
    text = _dump(report)
    if args.out is not None:
        _write(Path(args.out) / "classification.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_reconstruct(args, cfg: Config) -> int:
    lib = load_library(args.library)
    meas = _measurements(args.measurements, lib.n_space)
    report = {"regime": args.regime}
    if args.regime == "auto":
        _, psi = build_library(lib, meas)
        res = classify(lib, psi, meas.value, _budget(cfg, args.delta, meas.value))
        label = res.winner
        report["classification"] = res.to_dict(lib.labels)
    else:
        label = args.regime
    model = model_for(lib, label)
    report["regime"] = label
    truth = load_snapshots(args.truth) if args.truth else None
    if truth is not None:
        grid, ids = truth.grid, np.asarray(truth.space_ids)
    else:
        grid = TimeGrid(
            model.t0 if args.t0 is None else args.t0,
            model.dt if args.dt is None else args.dt,
            model.m if args.m is None else args.m,
        )
        ids = np.arange(1, lib.n_space + 1)
    b = reconstruct_amplitudes(build_phi(model, meas), meas)
    field = reconstruct_field(model, b, grid.times, ids)
    out = _out(args, "reconstruction")
    out.mkdir(parents=True, exist_ok=True)
    save_snapshots(SnapshotMatrix(field, grid, ids, label, lib.n_space), out / "reconstruction.spsn")
    report["amplitudes"] = b.as_pairs().tolist()
    report["measurement_residual"] = float(np.linalg.norm(build_phi(model, meas).values @ b.as_vector() - meas.value))
    if truth is not None:
        report["relative_l2_error"] = float(np.linalg.norm(field - truth.values) / np.linalg.norm(truth.values))
    text = _dump(report)
    _write(out / "report.json", text)
    summary = {k: v for k, v in report.items() if k not in ("amplitudes", "classification")}
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def cmd_eval(args, cfg: Config) -> int:
    specs = _specs(args, cfg)
    res = classification_sweep(
        specs,
        noise_stds=cfg.noise_stds,
        deltas=cfg.deltas,
        trials=cfg.trials,
        seed=cfg.seed,
        sensor_count=cfg.sensor_count,
        time_samples=cfg.time_sample_count,
        samples_mode=cfg.samples_mode,
        spatial_energy=cfg.spatial_energy,
        spacetime_energy=cfg.spacetime_energy,
        energy=cfg.energy,
        relative_delta=cfg.relative_delta,
        phase_offset=cfg.phase_offset,
        jobs=cfg.jobs,
    )
    out = _out(args, "eval")
    data = res.to_dict()
    data["metadata"] = {"seed": cfg.seed, "config": cfg.to_dict(), "version": __version__}
    data["specs"] = [s.to_dict() for s in specs]
    _write(out / "eval.json", _dump(data))

    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta"] + [repr(s) for s in res.noise_stds])
        for d, row in zip(res.deltas, res.rates):
            w.writerow([repr(d)] + [repr(float(r)) for r in row])
    with open(out / "rates_plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["noise_std"] + [f"rate_delta_{d:g}" for d in res.deltas])
        for j, s in enumerate(res.noise_stds):
            w.writerow([repr(s)] + [repr(float(res.rates[i, j])) for i in range(len(res.deltas))])

    print(f"seed {cfg.seed}, {cfg.trials} trials per cell, success rate")
    print(f"{'delta':>7} " + " ".join(f"{s:>9.5g}" for s in res.noise_stds))
    for d, row in zip(res.deltas, res.rates):
        print(f"{d:>7g} " + " ".join(f"{r:>9.2f}" for r in row))
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _global_flags(parser, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="JSON config file", **({"default": None} if not suppress else kw))
    parser.add_argument("--seed", type=int, help="RNG seed (overrides config)", **({"default": None} if not suppress else kw))
    parser.add_argument("--out", help="output directory", **({"default": None} if not suppress else kw))
    parser.add_argument("-v", "--verbose", action="count", **({"default": 0} if not suppress else kw))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stsense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write synthetic regime snapshot files")
    p.add_argument("--specs", help="regime spec JSON (default: built-in preset)")
    p.add_argument("--off-bin", action="store_true", help="shift oscillation frequencies by half a bin")
    p.add_argument("--train-noise", type=float, default=0.0, help="noise std added to the snapshots")
    p.add_argument("--measure", metavar="LABEL", help="also sample a measurement CSV from this regime")
    p.add_argument("--noise-std", type=float, default=0.0, help="noise std added to sampled measurements")
    p.add_argument("--samples-mode", choices=SAMPLES_MODES)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="build a regime library from snapshot files")
    p.add_argument("snapshots", nargs="*", help="snapshot files, one per regime")
    p.add_argument("--spatial-energy", type=float)
    p.add_argument("--spacetime-energy", type=float)
    p.add_argument("--energy", choices=("variance", "singular"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="classify a measurement set")
    p.add_argument("--library", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct the field from measurements")
    p.add_argument("--library", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--regime", default="auto", help="regime label or 'auto' (classify first)")
    p.add_argument("--truth", help="snapshot file to report the reconstruction error against")
    p.add_argument("--delta", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--m", type=int)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", parents=[common], help="classification rate sweep over noise and delta")
    p.add_argument("--specs", help="regime spec JSON (default: built-in preset)")
    p.add_argument("--trials", type=int)
    p.add_argument("--samples-mode", choices=SAMPLES_MODES)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_eval)
    return parser


def _config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    return cfg.with_overrides(
        seed=args.seed,
        trials=getattr(args, "trials", None),
        samples_mode=getattr(args, "samples_mode", None),
        jobs=getattr(args, "jobs", None),
        spatial_energy=getattr(args, "spatial_energy", None),
        spacetime_energy=getattr(args, "spacetime_energy", None),
        energy=getattr(args, "energy", None),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        print(_dump({"diagnostics": exc.diagnostics}), file=sys.stderr, end="")
        return EXIT_SOLVER
    except (DataError, StsenseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
