"""Sector objective for growing n against its large-n limit.

Prints the sup-gap per n on the admissible grid and the finite-n minimisers.

    python3 scripts/objective_convergence.py [--out curves.csv]
"""

from __future__ import annotations

import argparse

import numpy as np

from jumpfolio import AsymmetricPowerLaw, OneSectorMarket, PowerUtility
from jumpfolio.statics import objective_curves

NS = (10, 100, 1000, 10000)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="write the curves as CSV (varpi, f_n..., f_inf)")
    args = ap.parse_args(argv)

    market = OneSectorMarket(10, 0.2, 0.5, 0.05, -0.3, AsymmetricPowerLaw(0.5))
    curves = objective_curves(market, PowerUtility(2.0, 0.1), np.linspace(-3.0, 2.4, 109), NS)

    print(f"{'n':>6} {'max |f_n - f_inf|':>18} {'argmin':>12}")
    for n, gap, w in zip(curves.ns, curves.max_gaps, curves.argmin_n):
        print(f"{n:>6} {gap:>18.3e} {w:>12.6f}")
    print(f"{'inf':>6} {'':>18} {curves.argmin_inf:>12.6f}")

    if args.out:
        header = "varpi," + ",".join(f"f_{n}" for n in curves.ns) + ",f_inf"
        data = np.column_stack([curves.varpi, curves.f_n.T, curves.f_inf])
        np.savetxt(args.out, data, delimiter=",", header=header, comments="", fmt="%.12g")
    gaps = curves.max_gaps
    return 0 if all(a > b for a, b in zip(gaps, gaps[1:])) else 1


if __name__ == "__main__":
    raise SystemExit(main())
