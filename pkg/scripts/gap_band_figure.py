"""Causal upper/lower bounds for p = 0.1 with the shaded capacity band.

Writes ``gap_band.csv`` (plus its ``.json`` run record) and ``gap_band.svg``
into the output directory. Default tolerances take a few minutes on one
core; ``--quick`` loosens the Smith tolerance and snaps per-slot energies to
a 5% lattice, which leaves the causal columns untouched.
"""

import argparse
import sys
from pathlib import Path

from rbrcap.cli import main


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", type=Path, default=Path("figures"))
    ap.add_argument("--points", type=int, default=60)
    ap.add_argument("--quick", action="store_true")
    return ap.parse_args(argv)


def run(args) -> int:
    args.outdir.mkdir(parents=True, exist_ok=True)
    csv_path = args.outdir / "gap_band.csv"
    bounds = ["bounds", "--p", "0.1", "--bbar", f"0.1:1000:{args.points}:log",
              "--out", str(csv_path)]
    if args.quick:
        bounds += ["--smith-tol", "1e-4", "--lattice", "1.05"]
    status = main(bounds)
    if status:
        return status
    return main(["plot", "--input", str(csv_path), "--out", str(args.outdir / "gap_band.svg"),
                 "--series", "causal_upper,causal_lower,infinite_battery_upper",
                 "--title", "bounds for p = 0.1"])


if __name__ == "__main__":
    sys.exit(run(parse_args()))
