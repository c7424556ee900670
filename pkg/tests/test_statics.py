import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from jumpfolio import AsymmetricPowerLaw, MultiSectorMarket, OneSectorMarket, PointMass, PowerUtility, UniformDensity
from jumpfolio.errors import NonPositiveExcessReturn, OutOfRegime
from jumpfolio.solver import bar_objective, solve_bar_one_sector
from jumpfolio.statics import (
    SweepSpec,
    asymptotic_behavior,
    closed_form_varpi,
    critical_jump_size,
    critical_lambda,
    large_n_limit,
    objective_surface,
    sensitivity,
    surface_minimizer,
    sweep,
)

GAMMA2 = PowerUtility(2.0, 0.1)


def market(lam=0.5, jbar=-0.3, rbar=0.05, v=0.2, rho=0.5, n=10):
    return OneSectorMarket(n, v, rho, rbar, jbar, AsymmetricPowerLaw(lam))


def varpi(mk, prefs=GAMMA2, mode="asymptotic"):
    return solve_bar_one_sector(mk, prefs, mode).scalar


def test_critical_lambda_examples():
    assert critical_lambda(0.05, -0.1, AsymmetricPowerLaw(1.0)) == pytest.approx(0.5, rel=1e-14)
    assert critical_lambda(0.06, -0.2, PointMass(1.0, 0.5)) == pytest.approx(0.6, rel=1e-14)
    # only the shape of the measure matters
    assert critical_lambda(0.06, -0.2, PointMass(7.0, 0.5)) == pytest.approx(0.6, rel=1e-14)
    assert critical_lambda(0.06, -0.2, UniformDensity(3.0, 0.0, 1.0)) == pytest.approx(0.6, rel=1e-12)


def test_critical_lambda_errors():
    with pytest.raises(NonPositiveExcessReturn):
        critical_lambda(0.0, -0.1, AsymmetricPowerLaw(1.0))
    with pytest.raises(OutOfRegime):
        critical_lambda(0.05, 0.1, AsymmetricPowerLaw(1.0))
    with pytest.raises(OutOfRegime):
        critical_lambda(0.05, -0.1, PointMass(1.0, -0.5))


def test_critical_jump_size():
    assert critical_jump_size(0.05, 0.5, AsymmetricPowerLaw(1.0)) == pytest.approx(-0.1)
    with pytest.raises(OutOfRegime):
        critical_jump_size(0.6, 0.5, AsymmetricPowerLaw(1.0))


@pytest.mark.parametrize("lam_factor, sign", [(0.5, 1.0), (1.0, 0.0), (2.0, -1.0)])
def test_sign_of_varpi_against_critical_lambda(lam_factor, sign):
    lt = critical_lambda(0.05, -0.3, AsymmetricPowerLaw(1.0))
    w = varpi(market(lam=lam_factor * lt))
    if sign == 0.0:
        assert abs(w) < 1e-12
    else:
        assert math.copysign(1.0, w) == sign


def test_sign_of_varpi_against_jump_threshold():
    lam, rbar = 0.5, 0.05
    thr = -rbar / lam
    assert varpi(market(lam=lam, rbar=rbar, jbar=thr * 0.5)) > 0
    assert varpi(market(lam=lam, rbar=rbar, jbar=min(thr * 2, -0.01))) < 0
    # rbar / lam > 1: positive for every admissible loading
    for jbar in (-0.05, -0.5, -0.95):
        assert varpi(market(lam=0.04, rbar=0.05, jbar=jbar)) > 0


def test_lambda_to_zero_limits():
    kink = asymptotic_behavior(market(jbar=-0.9), "lambda_to_zero")
    assert kink.value == pytest.approx(1 / 0.9) and kink.kink_binding
    diff = asymptotic_behavior(market(jbar=-0.1), "lambda_to_zero")
    assert diff.value == pytest.approx(1.25) and not diff.kink_binding
    for jbar in (-0.9, -0.1):
        limit = asymptotic_behavior(market(jbar=jbar), "lambda_to_zero").value
        assert varpi(market(lam=1e-10, jbar=jbar)) == pytest.approx(limit, rel=1e-6)


def test_lambda_to_infinity_rate():
    mk = market(lam=1e6)
    coef = asymptotic_behavior(mk, "lambda_to_infinity").value
    ratio = varpi(mk) / (coef * math.sqrt(1e6))
    assert 0.99 <= ratio <= 1.01


def test_small_lambda_expansion_diffusive_branch():
    mk0 = market(lam=0.0, jbar=-0.1)
    res = asymptotic_behavior(mk0, "small_lambda")
    for lam in (1e-4, 1e-5):
        fd = (varpi(market(lam=lam, jbar=-0.1)) - res.value) / lam
        assert fd == pytest.approx(res.slope, rel=50 * lam)


def test_regime_checks():
    with pytest.raises(OutOfRegime):
        asymptotic_behavior(OneSectorMarket(5, 0.2, 0.5, 0.05, -0.3, AsymmetricPowerLaw(0.5, 0.1)), "lambda_to_zero")
    with pytest.raises(OutOfRegime):
        sensitivity(market(), PowerUtility(3.0, 0.1), "lambda")


points = st.tuples(
    st.floats(0.01, 3.0),  # lambda
    st.floats(-0.9, -0.05),  # jbar
    st.floats(0.01, 0.1),  # rbar
    st.floats(0.1, 0.4),  # v
    st.floats(0.1, 0.8),  # rho
)


@settings(max_examples=40, deadline=None)
@given(points)
def test_lambda_sensitivity_negative_and_matches_fd(p):
    lam, jbar, rbar, v, rho = p
    mk = market(lam, jbar, rbar, v, rho)
    d = sensitivity(mk, GAMMA2, "lambda")
    assert d < 0
    h = 1e-5 * lam
    fd = (varpi(market(lam + h, jbar, rbar, v, rho)) - varpi(market(lam - h, jbar, rbar, v, rho))) / (2 * h)
    assert d == pytest.approx(fd, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(points)
def test_jump_size_sensitivity_matches_fd(p):
    lam, jbar, rbar, v, rho = p
    d = sensitivity(market(lam, jbar, rbar, v, rho), GAMMA2, "jump_size")
    h = 1e-5 * abs(jbar)
    fd = (varpi(market(lam, jbar + h, rbar, v, rho)) - varpi(market(lam, jbar - h, rbar, v, rho))) / (2 * h)
    assert d > 0
    assert d == pytest.approx(fd, rel=1e-4, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(points, st.floats(1.2, 6.0))
def test_gamma_sensitivity_matches_fd(p, gamma):
    lam, jbar, rbar, v, rho = p
    mk = market(lam, jbar, rbar, v, rho)
    d = sensitivity(mk, PowerUtility(gamma, 0.1), "gamma")
    assume(abs(varpi(mk, PowerUtility(gamma, 0.1))) > 1e-6)
    h = 1e-5 * gamma
    fd = (varpi(mk, PowerUtility(gamma + h, 0.1)) - varpi(mk, PowerUtility(gamma - h, 0.1))) / (2 * h)
    assert d == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_gamma_sensitivity_vanishes_at_critical_lambda():
    lt = critical_lambda(0.05, -0.3, AsymmetricPowerLaw(1.0))
    assert abs(sensitivity(market(lam=lt), GAMMA2, "gamma")) < 1e-10


def test_varpi_monotone_in_parameters():
    lams = np.linspace(0.0, 3.0, 31)
    w = [varpi(market(lam=l)) for l in lams]
    assert np.all(np.diff(w) < 0)
    jbars = np.linspace(-0.95, -0.05, 31)
    w = [varpi(market(jbar=j)) for j in jbars]
    assert np.all(np.diff(w) > 0)
    gammas = [1.5, 2.0, 4.0, 10.0, 100.0, 1000.0]
    w = [abs(varpi(market(), PowerUtility(g, 0.1))) for g in gammas]
    assert np.all(np.diff(w) < 0)
    assert w[-1] < w[-2]


def test_large_n_without_jumps_is_merton_limit():
    mk = market(lam=0.0)
    res = large_n_limit(mk, GAMMA2, ns=(10, 100, 1000, 10000))
    assert res.varpi_inf == pytest.approx(0.05 / (2 * 0.04 * 0.5))
    for n, w in zip(res.ns, res.varpi_n):
        assert w == pytest.approx(n * 0.05 / (2 * mk.with_n(n).kappa1), rel=1e-12)
    g = res.gaps
    assert all(a > b for a, b in zip(g, g[1:]))


def test_large_n_rate_with_jumps():
    mk = market()
    res = large_n_limit(mk, GAMMA2, ns=(1000, 10000))
    for n, w in zip(res.ns, res.varpi_n):
        assert w == pytest.approx(closed_form_varpi(0.05, mk.with_n(n).kappa1 / n, -0.3, 0.5), abs=1e-12)
    ratio = res.gaps[0] / res.gaps[1]
    assert 5.0 <= ratio <= 20.0
    assert res.varpi_inf == pytest.approx(closed_form_varpi(0.05, 0.2 ** 2 * 0.5, -0.3, 0.5), abs=1e-13)


def test_sweep_single_point_equals_direct_solve():
    mk = market()
    res = sweep(SweepSpec(mk, GAMMA2, {"lambda": [0.5]}, mode="finite"))
    row = res.rows[0]
    direct = solve_bar_one_sector(mk, GAMMA2, "finite")
    assert row.varpi == direct.scalar and row.objective == direct.objective and row.status == direct.status


def test_sweep_records_failures():
    res = sweep(SweepSpec(market(), GAMMA2, {"rho": [0.5, 1.0], "n": [10.0, 2.5]}))
    statuses = {(r.point["rho"], r.point["n"]): r.status for r in res.rows}
    assert statuses[(1.0, 10.0)] == "DegenerateCorrelation"
    assert statuses[(0.5, 2.5)] == "OutOfRegime"
    assert math.isnan(res.rows[-1].varpi)
    with pytest.raises(OutOfRegime):
        SweepSpec(market(), GAMMA2, {"nope": [1.0]})


def test_sweep_decreasing_in_intensity():
    spec = SweepSpec(market(), GAMMA2, {"lambda": np.linspace(0, 2, 11), "jbar": [-0.8, -0.3, -0.05]})
    res = sweep(spec)
    assert res.spec.parameters == ("lambda", "jbar")
    table = res.column("varpi").reshape(11, 3)
    assert np.all(np.diff(table, axis=0) < 0)


def test_two_sector_surface_is_convex():
    mu = AsymmetricPowerLaw(0.4, 0.1)
    mk = MultiSectorMarket(2, 4, [0.2, 0.25], [0.4, 0.3], 0.1, [0.05, 0.03], [[-0.3, 0.1], [0.2, -0.4]], (mu, mu))
    g1, g2 = np.linspace(-1.5, 1.5, 31), np.linspace(-1.5, 1.5, 31)
    F = objective_surface(mk, GAMMA2, g1, g2)
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(2000):
        i, j, k, l = rng.integers(0, 16, size=4) * 2
        mi, mj = (i + k) // 2, (j + l) // 2
        vals = F[i, j], F[k, l], F[mi, mj]
        if not np.all(np.isfinite(vals)):
            continue
        assert vals[2] <= 0.5 * (vals[0] + vals[1]) + 1e-12
        checked += 1
    assert checked > 500
    w = surface_minimizer(mk, GAMMA2)
    assert bar_objective(mk, GAMMA2, w) <= np.nanmin(F) + 1e-12
