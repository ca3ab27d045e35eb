#!/usr/bin/env python3
"""Residual-vs-m sweep across problem sizes for both benchmark families.

Writes one artifact directory per run under runs/convergence/ and prints a
compact summary table (size, iterations, final residual, wall time).
"""

import csv
import sys
from pathlib import Path

from krylov_dre.cli import cli_run

CASES = [
    ("convdiff2d", ["--n0", "10"]),
    ("convdiff2d", ["--n0", "30"]),
    ("heat1d_fem", ["--n", "400"]),
    ("heat1d_fem", ["--n", "1600"]),
]


def main():
    rows = []
    for family, size_args in CASES:
        tag = f"{family}-{size_args[-1]}"
        out = Path("runs/convergence") / tag
        argv = [
            "convergence", "--family", family, *size_args,
            "--tf", "1.0", "--p", "2", "--h", "1e-3", "--tol", "1e-10",
            "--m-max", "30", "--seed", "11", "--out", str(out),
        ]
        if cli_run(argv) != 0:
            print(f"{tag}: FAILED", file=sys.stderr)
            continue
        with open(out / "convergence.csv") as fh:
            trace = list(csv.DictReader(fh))
        rows.append((tag, trace[-1]["m"], float(trace[-1]["residual"]),
                     float(trace[-1]["seconds"])))
    print(f"\n{'case':24s} {'m':>4s} {'residual':>12s} {'seconds':>9s}")
    for tag, m, res, sec in rows:
        print(f"{tag:24s} {m:>4s} {res:12.3e} {sec:9.2f}")


if __name__ == "__main__":
    main()
