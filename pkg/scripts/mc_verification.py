"""Monte Carlo check of the value identity and of policy optimality.

    python3 scripts/mc_verification.py [--paths 100000] [--seed 7] [--directions 20]
"""

from __future__ import annotations

import argparse
import time

from jumpfolio import AsymmetricPowerLaw, OneSectorMarket, PowerUtility, SimConfig, sim, solve_policy


def instance():
    market = OneSectorMarket(4, 0.2, 0.3, 0.06, -0.4, AsymmetricPowerLaw(0.5), r=0.02, r_perp=[0.02, -0.02, 0.01, -0.01])
    # pick beta so that the consumption constant is 1
    K0 = float(solve_policy(market, PowerUtility(2.0, 0.1)).K)
    prefs = PowerUtility(2.0, 0.1 + 2.0 * (1.0 - K0))
    return market, prefs, solve_policy(market, prefs)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--directions", type=int, default=20, help="0 skips the optimality check")
    ap.add_argument("--eps", type=float, default=1e-3)
    args = ap.parse_args(argv)

    market, prefs, policy = instance()
    K = float(policy.K)
    cfg = SimConfig(paths=args.paths, horizon=sim.default_horizon(K), eps=args.eps, seed=args.seed)
    t0 = time.perf_counter()
    est = sim.estimate_value(market, policy, prefs, cfg)
    print(f"K = {K:.6f}, T = {cfg.horizon:.4f}, paths = {cfg.paths}")
    print(f"value: MC {est.estimate:.6f} +/- {est.stderr:.2e}, benchmark {est.benchmark:.6f}, z = {est.z_score:+.2f}")
    print(f"  ({time.perf_counter() - t0:.1f}s)")
    ok = abs(est.z_score) <= 3.0

    if args.directions > 0:
        t0 = time.perf_counter()
        rep = sim.optimality_check(market, prefs, policy, 0.1, args.directions, cfg)
        for row in rep.rows:
            print(f"  {row.kind:<6} K={row.K:.5f} opt-pert={row.difference:+.3e} (se {row.stderr:.1e}) {'ok' if row.dominated else 'FAIL'}")
        print(f"dominated in {100 * rep.fraction_dominated:.0f}% of directions ({time.perf_counter() - t0:.1f}s)")
        ok = ok and rep.fraction_dominated >= 0.95
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
