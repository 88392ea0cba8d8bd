"""Plot MSE (and CRB, when present) against the sweep variable for result CSVs.

Usage:
    python3 scripts/plot_results.py results/snr_sweep_*.csv [--out figures]

Needs matplotlib (``pip install -e .[plot]``). One PNG is written per CSV.
"""

import argparse
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from obdoa.harness import read_csv  # noqa: E402

AXIS_LABELS = {"snr": "SNR (dB)", "snapshots": "snapshots Z", "dop": "degree of polarization"}


def _db(v):
    return 10 * math.log10(v) if v else float("nan")


def plot_file(path: Path, out_dir: Path) -> Path:
    rows = read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    methods = list(dict.fromkeys(r["method"] for r in rows))
    for method in methods:
        pts = [r for r in rows if r["method"] == method]
        ax.plot([r["sweep_value"] for r in pts], [_db(r["mse"]) for r in pts], "o-", label=method)
    first = [r for r in rows if r["method"] == methods[0]]
    if first and first[0].get("crb_1bit") is not None:
        xs = [r["sweep_value"] for r in first]
        ax.plot(xs, [_db(r["crb_1bit"]) for r in first], "k--", label="CRB one-bit")
        ax.plot(xs, [_db(r["crb_unq"]) for r in first], "k:", label="CRB unquantized")
    sweep = path.stem.split("_sweep")[0] if "_sweep" in path.stem else ""
    if sweep == "snapshot":
        ax.set_xscale("log")
    ax.set_xlabel(AXIS_LABELS.get({"snapshot": "snapshots"}.get(sweep, sweep), "sweep value"))
    ax.set_ylabel("MSE (dB)")
    ax.set_title(path.stem)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    out = out_dir / (path.stem + ".png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", nargs="+", type=Path)
    ap.add_argument("--out", type=Path, default=Path("figures"))
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for path in args.csv:
        print(plot_file(path, args.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
