"""Run every sweep config in configs/ and write results (plus meta sidecars) to one directory.

Usage:
    python3 scripts/run_experiments.py [--out results] [--threads 4] [--trials N] [PATTERN]

PATTERN is a glob over config names, e.g. ``snr_sweep_*``.
"""

import argparse
import sys
from pathlib import Path

from obdoa.cli import main as obdoa_main
from obdoa.config import parse_experiment

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("pattern", nargs="?", default="*")
    ap.add_argument("--out", default="results")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--trials", type=int)
    args = ap.parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    status = 0
    for cfg in sorted((ROOT / "configs").glob(args.pattern + ".cfg")):
        spec = parse_experiment(cfg)
        name = Path(spec.output_path or cfg.stem + ".csv").name
        cmd = ["experiment", "--config", str(cfg), "--threads", str(args.threads), "--out", str(out_dir / name)]
        if args.trials:
            cmd += ["--trials", str(args.trials)]
        print(f"== {cfg.name}", flush=True)
        status = max(status, obdoa_main(cmd))
    return status


if __name__ == "__main__":
    sys.exit(main())
