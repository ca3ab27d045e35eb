#!/usr/bin/env python3
"""Three-method agreement and timing on the small convection-diffusion case.

Reproduces the qualitative comparison of the projection solver, the full
BDF/Newton baseline and the dense reference at n = 49, T_f = 1.
"""

from pathlib import Path

from krylov_dre.cli import cli_run


def main():
    out = Path("runs/compare/n49")
    argv = [
        "compare", "--family", "convdiff2d", "--n0", "7", "--tf", "1.0",
        "--h", "1e-3", "--tol", "1e-10", "--seed", "7",
        "--methods", "eba,baseline,reference", "--out", str(out),
    ]
    raise SystemExit(cli_run(argv))


if __name__ == "__main__":
    main()
