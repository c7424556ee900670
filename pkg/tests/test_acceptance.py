"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import dataclasses
import math
import sys
import time
import warnings

import numpy as np
import pytest
from scipy.optimize import brentq

from jumpfolio import (
    AsymmetricPowerLaw,
    ExponentialUtility,
    LogUtility,
    OneSectorMarket,
    PowerUtility,
    SimConfig,
    decompose_sigma,
    solve_full_numeric,
    solve_merton,
    solve_policy,
)
from jumpfolio import sim, statics
from jumpfolio.roots import exposure_root_gamma2_powerlaw
from jumpfolio.solver import solve_bar_one_sector

from conftest import block_orthogonal, random_multi_sector, random_one_sector, report

SEED = 20261014


def _mc_instance():
    """gamma = 2 power-law market with beta chosen so that K = 1."""
    market = OneSectorMarket(
        4, 0.2, 0.3, 0.06, -0.4, AsymmetricPowerLaw(0.5), r=0.02, r_perp=[0.02, -0.02, 0.01, -0.01]
    )
    K0 = float(solve_policy(market, PowerUtility(2.0, 0.1)).K)
    prefs = PowerUtility(2.0, 0.1 + 2.0 * (1.0 - K0))
    policy = solve_policy(market, prefs)
    config = SimConfig(paths=100_000, horizon=sim.default_horizon(float(policy.K), 1e-3), dt=1 / 252, eps=1e-3, seed=7)
    return market, prefs, policy, config


def test_criterion_01_decomposition_exactness():
    rng = np.random.default_rng(SEED + 1)
    t0 = time.perf_counter()
    worst_split = worst_bar = worst_perp = 0.0
    for i in range(100):
        if i % 2 == 0:
            market = random_one_sector(rng, int(rng.integers(2, 61)))
            m, k = 1, market.n
        else:
            m, k = int(rng.integers(1, 6)), int(rng.integers(2, 13))
            market = random_multi_sector(rng, m, k)
        d = decompose_sigma(market)
        worst_split = max(worst_split, np.abs(d.sigma - d.sigma_bar - d.sigma_perp).max())
        for _ in range(20):
            x = rng.normal(size=(m, k))
            x -= x.mean(axis=1, keepdims=True)
            worst_bar = max(worst_bar, np.abs(d.sigma_bar @ x.ravel()).max())
        for l in range(m):
            ind = np.zeros(m * k)
            ind[l * k : (l + 1) * k] = 1.0
            worst_perp = max(worst_perp, np.abs(d.sigma_perp @ ind).max())
    elapsed = time.perf_counter() - t0
    ok = max(worst_split, worst_bar, worst_perp) <= 1e-12 and elapsed < 1.0
    report(1, "decomposition exactness", ok, f"split {worst_split:.1e}, bar {worst_bar:.1e}, perp {worst_perp:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_separated_vs_direct():
    rng = np.random.default_rng(SEED + 2)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        n = int(rng.choice([2, 4, 6, 8]))
        if i % 2 == 0:
            market = random_one_sector(rng, n)
        else:
            market = random_multi_sector(rng, 2, n // 2)
        prefs = PowerUtility(rng.uniform(1.2, 6.0), 0.1) if i % 5 else LogUtility(0.1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sep = solve_policy(market, prefs, method="separated")
        num = solve_full_numeric(market.sigma(), market.excess_returns(), market.jump_vectors(), market.measures, prefs, market.r)
        worst = max(worst, np.abs(sep.omega - num.omega).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30.0
    report(2, "separated vs direct oracle", ok, f"max |d omega| = {worst:.1e} over 50 instances, {elapsed:.1f}s")
    assert ok


def _foc_one_sided(w, rbar, c, jbar, lam):
    return -rbar + 2.0 * c * w - lam * jbar / (1.0 + w * jbar)


def _foc_two_sided(y, A, B, lp, lm):
    return -A + y + B * (-lp / (1.0 + y) + lm / (1.0 - y))


def test_criterion_03_cubic_vs_bracketed():
    rng = np.random.default_rng(SEED + 3)
    t0 = time.perf_counter()
    worst44 = worst93 = 0.0
    for _ in range(1000):
        rbar, c, jbar, lam = rng.uniform(-0.05, 0.2), rng.uniform(0.005, 0.1), rng.uniform(-0.95, -0.02), rng.uniform(0.0, 3.0)
        w = statics.closed_form_varpi(rbar, c, jbar, lam)
        wall = 1.0 / abs(jbar)
        lo = -(abs(rbar) + lam * abs(jbar) + 1.0) / (2.0 * c) - 1.0
        hi = wall * (1.0 - 1e-15)
        ref = brentq(_foc_one_sided, lo, hi, args=(rbar, c, jbar, lam), xtol=1e-15, rtol=1e-15, maxiter=500)
        worst44 = max(worst44, abs(w - ref) / max(1.0, abs(ref)))
    for _ in range(1000):
        A, B = rng.uniform(-3.0, 3.0), rng.uniform(0.01, 5.0)
        lp, lm = rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)
        if rng.random() < 0.2:
            lm = 0.0
        y, _ = exposure_root_gamma2_powerlaw(A, B, lp, lm)
        lo = -1.0 + 1e-15 if lp > 0 else -abs(A) - 10.0
        hi = 1.0 - 1e-15 if lm > 0 else abs(A) + B * lp + 10.0
        ref = brentq(_foc_two_sided, lo, hi, args=(A, B, lp, lm), xtol=1e-15, rtol=1e-15, maxiter=500)
        worst93 = max(worst93, abs(y - ref) / max(1.0, abs(ref)))
    elapsed = time.perf_counter() - t0
    ok = max(worst44, worst93) <= 1e-8 and elapsed < 10.0
    report(3, "closed-form cubic vs bracketed root", ok, f"one-sided {worst44:.1e}, two-sided {worst93:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_no_jump_and_kink_limits():
    lam = 1e-8
    rows = []
    # interior branch: rbar/(2c) < 1/|jbar|; kink branch: the reverse
    for rbar, jbar in [(0.03, -0.3), (0.06, -0.5), (0.2, -0.5), (0.5, -0.8)]:
        market = OneSectorMarket(10, 0.25, 0.4, rbar, jbar, AsymmetricPowerLaw(lam), r=0.01)
        prefs = PowerUtility(2.0, 0.1)
        c = market.v ** 2 * market.rho
        target = min(rbar / (2 * c), 1 / abs(jbar))
        got = solve_bar_one_sector(market, prefs, "asymptotic").scalar
        rows.append((rbar / (2 * c) > 1 / abs(jbar), abs(got - target)))
    # the full policy at tiny intensity is Merton on the interior branch
    market = OneSectorMarket(6, 0.25, 0.4, 0.03, -0.3, AsymmetricPowerLaw(lam), r=0.01, r_perp=block_orthogonal(np.random.default_rng(4), 1, 6))
    pol = solve_policy(market, PowerUtility(2.0, 0.1))
    merton = solve_merton(market.sigma(), market.excess_returns(), 2.0)
    merton_gap = float(np.abs(pol.omega - merton).max())
    both = {kink for kink, _ in rows} == {True, False}
    worst = max(g for _, g in rows)
    ok = both and worst <= 1e-6 and merton_gap <= 1e-6
    report(4, "no-jump and kink limits", ok, f"limit gap {worst:.1e} on both branches, Merton gap {merton_gap:.1e}")
    assert ok


def _negative_jump_market(rng, lam=None, jbar=None, rbar=None, n=20):
    return OneSectorMarket(
        n,
        rng.uniform(0.1, 0.4),
        rng.uniform(0.05, 0.8),
        rbar if rbar is not None else rng.uniform(0.01, 0.15),
        jbar if jbar is not None else rng.uniform(-0.95, -0.02),
        AsymmetricPowerLaw(lam if lam is not None else rng.uniform(0.01, 2.0)),
        r=0.01,
    )


def test_criterion_05_inequality_and_sign_laws():
    rng = np.random.default_rng(SEED + 5)
    prefs2 = PowerUtility(2.0, 0.1)
    v_bound = v_lam = v_jump = v_gamma = 0
    worst_tilde = 0.0
    for _ in range(200):
        market = _negative_jump_market(rng, n=int(rng.integers(2, 500)))
        w = solve_bar_one_sector(market, prefs2, "finite").scalar
        bound = min(market.n * market.rbar / (2 * market.kappa1), 1 / abs(market.jbar))
        v_bound += not w < bound
    for _ in range(200):
        base = _negative_jump_market(rng)
        tilde = statics.critical_lambda(base.rbar, base.jbar, base.measure)
        worst_tilde = max(worst_tilde, abs(tilde - base.rbar / abs(base.jbar)))
        lam = rng.uniform(0.0, 3.0 * tilde)
        g = PowerUtility(rng.uniform(1.1, 6.0), 0.1)
        w = solve_bar_one_sector(dataclasses.replace(base, measure=AsymmetricPowerLaw(lam)), g, "asymptotic").scalar
        v_lam += not (w > 0 if lam < tilde else w <= 0)
    for _ in range(200):
        lam = rng.uniform(0.05, 2.0)
        rbar = rng.uniform(0.01, 0.9) * lam  # keeps -rbar/lam inside (-1, 0)
        jbar = rng.uniform(-0.99, -0.001)
        market = _negative_jump_market(rng, lam=lam, jbar=jbar, rbar=rbar)
        g = PowerUtility(rng.uniform(1.1, 6.0), 0.1)
        w = solve_bar_one_sector(market, g, "asymptotic").scalar
        v_jump += not (w > 0 if jbar > -rbar / lam else w < 0)
    for _ in range(200):
        market = _negative_jump_market(rng)
        g = PowerUtility(rng.uniform(1.1, 6.0), 0.1)
        w = solve_bar_one_sector(market, g, "asymptotic").scalar
        d = statics.sensitivity(market, g, "gamma", "asymptotic")
        v_gamma += not (np.sign(d) == -np.sign(w))
    violations = v_bound + v_lam + v_jump + v_gamma
    ok = violations == 0 and worst_tilde <= 1e-12
    report(
        5,
        "inequality and sign laws",
        ok,
        f"violations bound/intensity/jump/gamma = {v_bound}/{v_lam}/{v_jump}/{v_gamma}, critical-intensity error {worst_tilde:.1e}",
    )
    assert ok


def _varpi(market, prefs):
    return solve_bar_one_sector(market, prefs, "asymptotic").scalar


def test_criterion_06_sensitivity_oracles():
    rng = np.random.default_rng(SEED + 6)
    worst = {"lambda": 0.0, "jump_size": 0.0, "gamma": 0.0}
    for _ in range(100):
        market = _negative_jump_market(rng)
        prefs = PowerUtility(2.0, 0.1)
        lam, jbar = market.measure.lam_plus, market.jbar
        h = 1e-5 * lam
        up = dataclasses.replace(market, measure=AsymmetricPowerLaw(lam + h))
        dn = dataclasses.replace(market, measure=AsymmetricPowerLaw(lam - h))
        fd = (_varpi(up, prefs) - _varpi(dn, prefs)) / (2 * h)
        cf = statics.sensitivity(market, prefs, "lambda")
        worst["lambda"] = max(worst["lambda"], abs(cf - fd) / abs(fd))

        h = 1e-5 * abs(jbar)
        fd = (_varpi(dataclasses.replace(market, jbar=jbar + h), prefs) - _varpi(dataclasses.replace(market, jbar=jbar - h), prefs)) / (2 * h)
        cf = statics.sensitivity(market, prefs, "jump_size")
        worst["jump_size"] = max(worst["jump_size"], abs(cf - fd) / abs(fd))

        gamma = rng.uniform(1.1, 6.0)
        h = 1e-5 * gamma
        fd = (_varpi(market, PowerUtility(gamma + h, 0.1)) - _varpi(market, PowerUtility(gamma - h, 0.1))) / (2 * h)
        cf = statics.sensitivity(market, PowerUtility(gamma, 0.1), "gamma")
        worst["gamma"] = max(worst["gamma"], abs(cf - fd) / abs(fd))
    ok = max(worst.values()) <= 1e-4
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(6, "sensitivity oracles", ok, f"max relative error: {detail}")
    assert ok


def test_criterion_07_large_n_convergence():
    t0 = time.perf_counter()
    market = OneSectorMarket(10, 0.2, 0.3, 0.06, -0.4, AsymmetricPowerLaw(0.05), r=0.01)
    res = statics.large_n_limit(market, PowerUtility(2.0, 0.1))
    gaps = res.gaps
    decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
    ratio = gaps[res.ns.index(1000)] / gaps[res.ns.index(10000)]
    elapsed = time.perf_counter() - t0
    ok = decreasing and 5.0 <= ratio <= 20.0 and elapsed < 5.0
    report(7, "large-n convergence", ok, f"gaps decreasing={decreasing}, ratio(1e3/1e4) = {ratio:.3f}, {elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_criterion_08_monte_carlo_value_identity():
    market, prefs, policy, config = _mc_instance()
    t0 = time.perf_counter()
    est = sim.estimate_value(market, policy, prefs, config)
    elapsed = time.perf_counter() - t0
    ok = math.exp(-float(policy.K) * config.horizon) <= 1e-3 + 1e-15 and abs(est.z_score) <= 3.0 and elapsed < 120.0
    report(
        8,
        "Monte Carlo value identity",
        ok,
        f"estimate {est.estimate:.6f} vs {est.benchmark:.6f}, stderr {est.stderr:.2e}, z = {est.z_score:+.2f}, {elapsed:.0f}s",
    )
    assert ok


@pytest.mark.slow
def test_criterion_09_monte_carlo_optimality():
    market, prefs, policy, config = _mc_instance()
    t0 = time.perf_counter()
    rep = sim.optimality_check(market, prefs, policy, perturbation=0.1, directions=20, config=config)
    elapsed = time.perf_counter() - t0
    frac = rep.fraction_dominated
    ok = frac >= 0.95 and elapsed < 300.0
    report(9, "Monte Carlo optimality", ok, f"{frac:.0%} of {len(rep.rows)} perturbations dominated, {elapsed:.0f}s")
    assert ok


def test_criterion_10_scaling_claim():
    def family(n):
        return OneSectorMarket(n, 0.2, 0.3, 0.06, -0.4, AsymmetricPowerLaw(0.3), r=0.01, r_perp=sim.dispersed_returns(n, 0.02))

    ns = [100, 200, 500, 1000, 2000, 5000, 10000]
    table = sim.scaling_check(family, PowerUtility(2.0, 0.1), ns, fit_from=100)
    y_big = [abs(r.y) for r in table.rows if r.n >= 1000]
    y_ok = all(abs(y - abs(table.y_limit)) <= 0.1 * abs(table.y_limit) for y in y_big)
    slopes_ok = 0.9 <= table.drift_slope <= 1.1 and 0.9 <= table.variance_slope <= 1.1
    ok = slopes_ok and y_ok
    report(
        10,
        "scaling claim",
        ok,
        f"drift slope {table.drift_slope:.3f}, variance slope {table.variance_slope:.3f}, |y| within 10% of limit={y_ok}",
    )
    assert ok


def test_criterion_11_utility_family_consistency():
    rng = np.random.default_rng(SEED + 11)
    worst_log = 0.0
    for i in range(10):
        market = random_one_sector(rng, 6) if i % 2 else random_multi_sector(rng, 2, 3)
        log_w = solve_policy(market, LogUtility(0.1)).omega
        lo = solve_policy(market, PowerUtility(1 - 1e-4, 0.1)).omega
        hi = solve_policy(market, PowerUtility(1 + 1e-4, 0.1)).omega
        worst_log = max(worst_log, np.abs(log_w - 0.5 * (lo + hi)).max())
    worst_exp = 0.0
    for i in range(10):
        market = random_one_sector(rng, 5, measure=AsymmetricPowerLaw(0.0))
        market = dataclasses.replace(market, r=rng.uniform(0.01, 0.05))
        prefs = ExponentialUtility(rng.uniform(0.5, 5.0), 0.1)
        got = solve_policy(market, prefs).omega
        want = np.linalg.solve(market.sigma(), market.excess_returns()) / (market.r * prefs.q)
        worst_exp = max(worst_exp, np.abs(got - want).max() / max(1.0, np.abs(want).max()))
    ok = worst_log <= 1e-3 and worst_exp <= 1e-10
    report(11, "utility-family consistency", ok, f"log vs gamma->1 {worst_log:.1e}, exponential vs closed form {worst_exp:.1e}")
    assert ok


def test_criterion_12_figure_shapes():
    base = OneSectorMarket(10, 0.2, 0.3, 0.06, -0.4, AsymmetricPowerLaw(0.5), r=0.01)
    prefs = PowerUtility(2.0, 0.1)
    lams = np.linspace(0.0, 2.0, 21)
    jbars = np.linspace(-0.9, -0.05, 18)
    res = statics.sweep(statics.SweepSpec(base, prefs, {"lambda": lams, "jbar": jbars}))
    grid = res.column("varpi").reshape(lams.size, jbars.size)
    all_ok = bool(np.all(np.isfinite(grid))) and all(r.status == "root" for r in res.rows)
    monotone = bool(np.all(np.diff(grid, axis=0) < 0))

    curves = statics.objective_curves(base, prefs, np.linspace(-3.0, 2.4, 109), [10, 100, 1000, 10000])
    gaps = curves.max_gaps
    converging = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = all_ok and monotone and converging
    report(
        12,
        "figure-shape reproduction",
        ok,
        f"sweep decreasing in intensity={monotone}, objective max gaps {', '.join(f'{g:.1e}' for g in gaps)}",
    )
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
