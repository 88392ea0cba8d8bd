"""Command line entry point: ``obdoa <subcommand> [options]``.

Exit status: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, container
from .config import ConfigError, parse_experiment
from .crb import CrbParams, crb_doa
from .estimator import DEFAULT_GRID, METHODS, CoarrayGeometry, EstimationError, run_method
from .geometry import ArrayConfig, GeometryError, coprime_array, describe, nested_array, ula
from .harness import emit_results, run_experiment, trial_rng
from .quantize import one_bit_quantize
from .signal_model import ScenarioError, measure, snr_to_noise_power, source_signals

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    spec = parse_experiment(Path(args.config))
    return spec.with_overrides(seed=getattr(args, "seed", None), trials=getattr(args, "trials", None),
                               threads=getattr(args, "threads", None))


def _draw(spec, trial: int = 0):
    rng = trial_rng(spec.seed, trial)
    scenario = spec.scenario(rng)
    signals = source_signals(scenario.sources, scenario.snapshots, rng)
    raw = measure(scenario.array, scenario.thetas, signals, scenario.noise_power, rng)
    return scenario, signals, raw


def _open_out(path):
    return open(path, "w", newline="") if path else contextlib.nullcontext(sys.stdout)


def cmd_geometry(args) -> int:
    if args.config:
        array = _load(args).array
    elif args.kind == "nested":
        array = nested_array(args.l1, args.l2)
    elif args.kind == "coprime":
        array = coprime_array(args.m, args.n)
    elif args.kind == "ula":
        array = ula(args.n)
    elif args.kind == "custom" and args.positions:
        array = ArrayConfig(tuple(int(p) for p in args.positions.split(",")), "custom")
    else:
        raise ConfigError("give --config or --kind with its parameters")
    info = describe(array)
    with _open_out(args.out) as fh:
        if args.format == "json":
            fh.write(json.dumps(info, indent=2) + "\n")
        else:
            fh.write(f"kind            {info['label']}\n")
            fh.write(f"positions       {' '.join(map(str, info['positions']))}\n")
            fh.write(f"sensors         {info['num_sensors']}\n")
            fh.write(f"lags            {info['lags'][0]} .. {info['lags'][-1]} ({len(info['lags'])} distinct)\n")
            fh.write(f"holes           {' '.join(map(str, info['holes'])) or '-'}\n")
            fh.write(f"uniform segment -{info['max_uniform_lag']} .. {info['max_uniform_lag']}\n")
            fh.write(f"max sources     {info['max_resolvable_sources']}\n")
    return 0


def cmd_simulate(args) -> int:
    spec = _load(args)
    _, _, raw = _draw(spec)
    container.write(raw, args.out, args.format)
    return 0


def cmd_quantize(args) -> int:
    snaps = container.read_binary(args.input)
    container.write(one_bit_quantize(snaps), args.out, args.format)
    return 0


def cmd_spectrum(args) -> int:
    spec = _load(args)
    scenario, _, raw = _draw(spec)
    quantized = one_bit_quantize(raw)
    geo = CoarrayGeometry.of(spec.array)
    grid = np.arange(-0.5, 0.5, args.step) if args.step else DEFAULT_GRID
    methods = args.methods.split(",") if args.methods else list(spec.methods)
    cols = {}
    for name in methods:
        est = run_method(name, raw, quantized, scenario.num_sources, geo, grid=grid)
        cols[name] = est.spectrum[1]
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_bar", *methods])
        for n, t in enumerate(grid):
            w.writerow([repr(float(t))] + [repr(float(cols[m][n])) for m in methods])
    return 0


def cmd_estimate(args) -> int:
    spec = _load(args)
    scenario, _, raw = _draw(spec)
    quantized = one_bit_quantize(raw)
    geo = CoarrayGeometry.of(spec.array)
    methods = args.methods.split(",") if args.methods else list(spec.methods)
    out = []
    for name in methods:
        t0 = time.perf_counter()
        est = run_method(name, raw, quantized, scenario.num_sources, geo)
        out.append({"method": name, "thetas": [float(t) for t in est.thetas],
                    "runtime_ms": 1e3 * (time.perf_counter() - t0)})
    with _open_out(args.out) as fh:
        fh.write(json.dumps({"truth": scenario.thetas.tolist(), "estimates": out}, indent=2) + "\n")
    return 0


def cmd_crb(args) -> int:
    spec = _load(args)
    snrs = [float(s) for s in args.snr.split(",")] if args.snr else [None]
    snaps = [int(s) for s in args.snapshots.split(",")] if args.snapshots else [spec.snapshots]
    trials = args.trials or 20
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "snapshots", "k", "crb_one_bit", "crb_unquantized", "loss_db"])
        for snr in snrs:
            for z in snaps:
                noise = spec.noise_power if snr is None else snr_to_noise_power(snr)
                acc1, acc0 = [], []
                for t in range(trials):
                    rng = trial_rng(spec.seed, t)
                    scenario = spec.scenario(rng)
                    signals = source_signals(scenario.sources, z, rng)
                    params = CrbParams.from_signals(scenario.thetas, signals, noise, spec.array)
                    acc1.append(crb_doa(params, "one_bit"))
                    acc0.append(crb_doa(params, "unquantized"))
                c1, c0 = np.mean(acc1, axis=0), np.mean(acc0, axis=0)
                snr_db = snr if snr is not None else 10 * np.log10(1 / (2 * noise))
                for k in range(len(c1)):
                    w.writerow([repr(float(snr_db)), z, k, repr(float(c1[k])), repr(float(c0[k])),
                                repr(float(10 * np.log10(c1[k] / c0[k])))])
    return 0


def cmd_experiment(args) -> int:
    spec = _load(args)
    fmt = args.format or spec.output_format
    out = args.out or spec.output_path
    t0 = time.perf_counter()
    result = run_experiment(spec)
    wall = time.perf_counter() - t0
    meta = {"seed": spec.seed, "version": _version_string(), "wall_time_s": wall, "threads": spec.threads,
            "trials": spec.trials}
    if out:
        emit_results(result, out, fmt, spec, meta)
    for r in result.rows:
        sv = "-" if r.sweep_value is None else f"{r.sweep_value:g}"
        mse = "nan" if r.mse is None else f"{r.mse:.3e}"
        loss = "" if r.loss_db is None else f"  loss {r.loss_db:5.1f} dB"
        crb = "" if r.crb_one_bit is None else f"  crb1 {r.crb_one_bit:.3e}  crb0 {r.crb_unquantized:.3e}"
        print(f"{sv:>8}  {r.method:<22} mse {mse}  fail {r.failures}{crb}{loss}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obdoa", description="One-bit DOA estimation on sparse cross-dipole arrays.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, formats=None):
        sp.add_argument("--config", help="scenario/experiment config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", help="output path (default stdout where applicable)")
        if formats:
            sp.add_argument("--format", choices=formats, default=None)
        return sp

    g = common(sub.add_parser("geometry", help="array positions, coarray, holes"), ["table", "json"])
    g.add_argument("--kind", choices=["ula", "nested", "coprime", "custom"])
    g.add_argument("--l1", type=int)
    g.add_argument("--l2", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--positions", help="comma-separated integers for a custom array")
    g.set_defaults(func=cmd_geometry)

    s = common(sub.add_parser("simulate", help="write one trial's raw snapshots"), ["bin", "csv"])
    s.set_defaults(func=cmd_simulate)

    q = common(sub.add_parser("quantize", help="one-bit quantize a snapshot file"), ["bin", "csv"])
    q.add_argument("--input", required=True)
    q.set_defaults(func=cmd_quantize)

    sp = common(sub.add_parser("spectrum", help="MUSIC spectra of one trial as CSV"))
    sp.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    sp.add_argument("--step", type=float, help="grid step in normalized DOA (default 1e-3)")
    sp.set_defaults(func=cmd_spectrum)

    e = common(sub.add_parser("estimate", help="DOA estimates of one trial as JSON"))
    e.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    e.set_defaults(func=cmd_estimate)

    c = common(sub.add_parser("crb", help="one-bit and unquantized CRB sweep as CSV"))
    c.add_argument("--snr", help="comma-separated SNR values in dB")
    c.add_argument("--snapshots", help="comma-separated snapshot counts")
    c.set_defaults(func=cmd_crb)

    x = common(sub.add_parser("experiment", help="Monte Carlo MSE sweep"), ["csv", "json"])
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "format", None) is None and args.command in ("simulate", "quantize"):
        args.format = "bin"
    if getattr(args, "format", None) is None and args.command == "geometry":
        args.format = "table"
    try:
        if args.command in ("simulate",) and not args.out:
            raise ConfigError("--out is required")
        if args.command == "quantize" and not args.out:
            raise ConfigError("--out is required")
        return args.func(args)
    except (ConfigError, GeometryError, ScenarioError) as err:
        print(f"obdoa: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, np.linalg.LinAlgError) as err:
        print(f"obdoa: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
