"""Optimal portfolio weights and consumption constants.

Every utility family reduces to minimising a convex objective

    g(w) = -w'R + (a/2) w' Sigma w + sum_l Phi_l(w'J_l)

with curvature ``a`` (``gamma`` for power, 1 for log, ``r q`` for CARA in dollar
amounts) and a jump penalty ``Phi_l`` per source.  Structured markets split
into an unconstrained Merton problem on ``Vperp`` and a small problem on
``Vbar``.  When all jump sources share a loading vector the ``Vbar`` problem
collapses further to a scalar equation in the jump exposure ``y``:

    y - A + B Phi'(y) = 0,

strictly increasing in ``y``, so it has at most one root on the solvency interval.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from . import levy
from .errors import (
    InvalidGamma,
    NonCoercive,
    NonConvergence,
    NotPositiveDefinite,
    ShapeMismatch,
    SingularSigma,
    SolvencyViolation,
    TransversalityViolated,
    TransversalityWarning,
)
from .levy import AsymmetricPowerLaw, LevyJumpMeasure, PointMass, admissible_interval
from .market import MultiSectorMarket, OneSectorMarket, RawMarket, _as_multi, invariance_residual
from .roots import exposure_root_gamma2_powerlaw, quadratic_roots, safeguarded_newton

Mode = Literal["finite", "asymptotic"]

SCALAR_TOL = 1e-14
VECTOR_TOL = 1e-10
NEWTON_MAXITER = 500


# ---------------------------------------------------------------------------
# preferences


@dataclass(frozen=True)
class PowerUtility:
    gamma: float
    beta: float

    def __post_init__(self):
        g = float(self.gamma)
        if g == 1.0:
            raise InvalidGamma("gamma = 1 is log utility; use LogUtility / solve_log")
        if not (g > 0 and math.isfinite(g)):
            raise InvalidGamma(f"gamma must be positive and finite, got {g}")
        _check_beta(self.beta)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class ExponentialUtility:
    q: float
    beta: float

    def __post_init__(self):
        if not (float(self.q) > 0 and math.isfinite(self.q)):
            raise InvalidGamma(f"q must be positive and finite, got {self.q}")
        _check_beta(self.beta)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class LogUtility:
    beta: float

    def __post_init__(self):
        _check_beta(self.beta)
        object.__setattr__(self, "beta", float(self.beta))


Preferences = PowerUtility | ExponentialUtility | LogUtility


def _check_beta(beta: float) -> None:
    if not (float(beta) > 0 and math.isfinite(beta)):
        raise InvalidGamma(f"discount rate beta must be positive, got {beta}")


@dataclass(frozen=True)
class Penalty:
    """Curvature and jump penalty ``Phi`` (with derivatives) of one utility family."""

    curvature: float
    value: Callable[[LevyJumpMeasure, float], float]
    d1: Callable[[LevyJumpMeasure, float], float]
    d2: Callable[[LevyJumpMeasure, float], float]
    walls: bool
    family: str
    gamma: float | None = None


def penalty_for(prefs: Preferences, r: float | None = None) -> Penalty:
    if isinstance(prefs, PowerUtility):
        g = prefs.gamma
        return Penalty(
            g,
            lambda mu, y: levy.psi(mu, g, y),
            lambda mu, y: levy.psi_prime(mu, g, y),
            lambda mu, y: levy.psi_second(mu, g, y),
            True,
            "power",
            g,
        )
    if isinstance(prefs, LogUtility):
        return Penalty(1.0, levy.psi_log, levy.psi_log_prime, levy.psi_log_second, True, "log")
    if isinstance(prefs, ExponentialUtility):
        if r is None or not r > 0:
            raise NonCoercive(f"exponential utility needs a positive riskless rate, got r={r}")
        rq = r * prefs.q
        return Penalty(
            rq,
            lambda mu, y: levy.psi_exponential(mu, rq, y) / rq,
            lambda mu, y: levy.psi_exponential_prime(mu, rq, y) / rq,
            lambda mu, y: levy.psi_exponential_second(mu, rq, y) / rq,
            False,
            "exponential",
        )
    raise TypeError(f"unknown preferences {prefs!r}")


def _interval(mu: LevyJumpMeasure, pen: Penalty) -> tuple[float, float]:
    return admissible_interval(mu) if pen.walls else (-math.inf, math.inf)


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ExposureRoot:
    y: float
    branch: str
    status: str


@dataclass(frozen=True)
class BarSolution:
    """Solution of the ``Vbar`` problem in scaled weights ``varpi = k * omega_bar``."""

    varpi: np.ndarray
    y: np.ndarray
    branch: str
    status: str
    foc_residual: float
    objective: float

    @property
    def scalar(self) -> float:
        if self.varpi.shape != (1,):
            raise ShapeMismatch("bar solution is not scalar")
        return float(self.varpi[0])


@dataclass(frozen=True)
class ThreeFunds:
    delta1: np.ndarray
    delta2: np.ndarray
    y: float


@dataclass(frozen=True)
class NumericSolution:
    omega: np.ndarray
    y: np.ndarray
    objective: float
    grad_norm: float
    iterations: int


@dataclass
class Policy:
    """Optimal constant policy.

    For exponential utility ``omega`` holds dollar amounts and ``omega0`` is NaN
    (the riskless amount is ``X - sum(omega)``).  ``K`` is the pair ``(K1, K2)``
    for log utility.
    """

    omega: np.ndarray
    omega0: float
    omega_bar: np.ndarray
    omega_perp: np.ndarray
    varpi: np.ndarray
    y: np.ndarray
    K: float | tuple[float, float]
    funds: ThreeFunds | None
    objective: float
    preferences: Preferences
    diagnostics: dict = field(default_factory=dict)

    @property
    def transversality_ok(self) -> bool:
        return bool(self.diagnostics.get("transversality_ok", True))

    def consumption(self, wealth: float) -> float:
        if isinstance(self.preferences, ExponentialUtility):
            r = self.diagnostics["r"]
            return r * wealth - math.log(r * self.K) / self.preferences.q
        rate = self.K[0] if isinstance(self.K, tuple) else self.K
        return rate * wealth


# ---------------------------------------------------------------------------
# elementary pieces


def solve_merton(sigma: np.ndarray, R: np.ndarray, gamma: float) -> np.ndarray:
    """``(1/gamma) Sigma^-1 R``."""
    if not gamma > 0:
        raise InvalidGamma(f"gamma must be > 0, got {gamma}")
    return _spd_solve(sigma, R) / gamma


def _spd_solve(S: np.ndarray, x: np.ndarray) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    x = np.asarray(x, dtype=float)
    try:
        c = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularSigma("covariance matrix is not positive definite") from None
    z = np.linalg.solve(c, x)
    return np.linalg.solve(c.T, z)


def solve_orthogonal(market, gamma: float) -> np.ndarray:
    """Merton weights restricted to ``Vperp``: block ``l`` is ``R_l_perp / (gamma v_l^2 (1 - rho_ll))``."""
    if not gamma > 0:
        raise InvalidGamma(f"gamma must be > 0, got {gamma}")
    mk = _as_multi(market)
    blocks = mk.r_perp.reshape(mk.m, mk.k)
    return (blocks / (gamma * mk.idiosyncratic[:, None])).ravel()


def sigma_solve(market, x: np.ndarray) -> np.ndarray:
    """``Sigma^-1 x`` for any market kind; structured markets use the closed-form eigen-data."""
    if isinstance(market, RawMarket):
        return _spd_solve(market.sigma_matrix, x)
    mk = _as_multi(market)
    blocks = np.asarray(x, dtype=float).reshape(mk.m, mk.k)
    means = blocks.mean(axis=1)
    coords = np.linalg.solve(mk.kappa_matrix, means)
    perp = (blocks - means[:, None]) / mk.idiosyncratic[:, None]
    return (perp + coords[:, None]).ravel()


def solve_exposure(A: float, B: float, measure: LevyJumpMeasure, pen: Penalty) -> ExposureRoot:
    """Root of ``y - A + B Phi'(y) = 0`` on the solvency interval of ``measure``."""
    if B < 0:
        raise NotPositiveDefinite("exposure equation needs B >= 0")
    if B == 0.0 or measure.is_null():
        return ExposureRoot(A, "closed-form quadratic", "root")
    if pen.family == "power" and pen.gamma == 2.0 and isinstance(measure, AsymmetricPowerLaw):
        y, branch = exposure_root_gamma2_powerlaw(A, B, measure.lam_plus, measure.lam_minus)
        return ExposureRoot(y, branch, "root")
    if pen.family == "log" and isinstance(measure, PointMass) and measure.z != 0.0:
        zb = measure.z
        roots = [t for t in quadratic_roots(zb, 1.0 - A * zb, -A - B * measure.lam * zb) if 1.0 + t * zb > 0]
        y = min(roots, key=lambda t: abs(t - A - B * measure.lam * zb / (1.0 + t * zb)))
        return ExposureRoot(y, "closed-form quadratic (log point mass)", "root")
    lo, hi = _interval(measure, pen)
    y, status = safeguarded_newton(
        lambda t: t - A + B * pen.d1(measure, t),
        lambda t: 1.0 + B * pen.d2(measure, t),
        lo,
        hi,
        A,
        tol=SCALAR_TOL,
    )
    if status != "root":
        warnings.warn(
            f"first-order condition has no interior root; optimum sits on the solvency wall ({status})",
            RuntimeWarning,
            stacklevel=2,
        )
    return ExposureRoot(y, "safeguarded-newton", status)


def _zero_curvature_exposure(rbar: float, jbar: float, measure: LevyJumpMeasure, pen: Penalty) -> ExposureRoot:
    # no quadratic term: solve Phi'(y) = rbar / jbar
    if jbar == 0.0 or measure.is_null():
        raise NonCoercive("objective is linear in the sector weight; no minimiser")
    target = rbar / jbar
    lo, hi = _interval(measure, pen)
    y, status = safeguarded_newton(
        lambda t: pen.d1(measure, t) - target, lambda t: pen.d2(measure, t), lo, hi, 0.0, tol=SCALAR_TOL
    )
    return ExposureRoot(y, "safeguarded-newton", status)


# ---------------------------------------------------------------------------
# generic convex Newton


def _newton_minimize(
    b: np.ndarray,
    M: np.ndarray,
    G: np.ndarray,
    measures: Sequence[LevyJumpMeasure],
    pen: Penalty,
    tol: float = VECTOR_TOL,
    maxiter: int = NEWTON_MAXITER,
) -> NumericSolution:
    """Minimise ``-x'b + (a/2) x'Mx + sum_l Phi_l(G[:, l]'x)`` by damped Newton from 0."""
    a = pen.curvature
    b = np.asarray(b, dtype=float)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    active = [l for l, mu in enumerate(measures) if not mu.is_null() and np.any(G[:, l] != 0.0)]
    Ga = G[:, active]
    mus = [measures[l] for l in active]
    walls = [_interval(mu, pen) for mu in mus]

    def feasible(y):
        return all(lo < yl < hi for yl, (lo, hi) in zip(y, walls))

    def evaluate(x):
        y = Ga.T @ x
        f = -x @ b + 0.5 * a * x @ M @ x + math.fsum(pen.value(mu, yl) for mu, yl in zip(mus, y))
        d1 = np.array([pen.d1(mu, yl) for mu, yl in zip(mus, y)])
        g = -b + a * (M @ x) + Ga @ d1
        return f, g

    x = np.zeros_like(b)
    f, g = evaluate(x)
    gnorm = float(np.abs(g).max(initial=0.0))
    for it in range(maxiter):
        if gnorm <= tol:
            return NumericSolution(x, G.T @ x, f, gnorm, it)
        y = Ga.T @ x
        d2 = np.array([pen.d2(mu, yl) for mu, yl in zip(mus, y)])
        H = a * M + (Ga * d2) @ Ga.T
        try:
            step = -_spd_solve(H, g)
        except SingularSigma:
            raise NonCoercive("Hessian lost positive definiteness") from None
        slope = float(g @ step)
        t = 1.0
        for _ in range(80):
            x_new = x + t * step
            if feasible(Ga.T @ x_new):
                f_new, g_new = evaluate(x_new)
                gn_new = float(np.abs(g_new).max(initial=0.0))
                if f_new <= f + 1e-4 * t * slope or gn_new < gnorm:
                    break
            t *= 0.5
        else:
            if gnorm <= 1e3 * tol:
                return NumericSolution(x, G.T @ x, f, gnorm, it)
            raise NonConvergence(f"line search failed at |grad| = {gnorm:.3g}")
        x, f, g, gnorm = x_new, f_new, g_new, gn_new
    raise NonConvergence(f"Newton did not converge in {maxiter} iterations (|grad| = {gnorm:.3g})")


def solve_full_numeric(
    sigma: np.ndarray,
    R: np.ndarray,
    jumps: np.ndarray,
    measures: Sequence[LevyJumpMeasure],
    prefs: Preferences,
    r: float | None = None,
    tol: float = VECTOR_TOL,
) -> NumericSolution:
    """Direct n-dimensional minimisation of the full objective; the oracle for the separated path."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    R = np.asarray(R, dtype=float)
    J = np.asarray(jumps, dtype=float)
    if J.ndim == 1:
        J = J.reshape(-1, 1)
    if sigma.shape != (R.size, R.size) or J.shape[0] != R.size or J.shape[1] != len(measures):
        raise ShapeMismatch("inconsistent shapes for sigma, R, jump loadings and measures")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise SingularSigma("covariance matrix is not positive definite") from None
    return _newton_minimize(R, sigma, J, list(measures), penalty_for(prefs, r), tol=tol)


# ---------------------------------------------------------------------------
# the Vbar problem


def _identical_source(G: np.ndarray, measures: Sequence[LevyJumpMeasure]):
    """Single loading vector and combined measure if all sources load identically."""
    live = [(G[:, l], mu) for l, mu in enumerate(measures) if not mu.is_null() and np.any(G[:, l] != 0.0)]
    if not live:
        return np.zeros(G.shape[0]), None
    g0, mu0 = live[0]
    if all(np.array_equal(g, g0) and mu == mu0 for g, mu in live[1:]):
        return g0, mu0.scaled(len(live)) if len(live) > 1 else mu0
    return None


def _bar_objective(varpi, M, b, G, measures, pen) -> float:
    y = G.T @ varpi
    jump = math.fsum(pen.value(mu, yl) for mu, yl in zip(measures, y) if not mu.is_null())
    return float(-varpi @ b + 0.5 * pen.curvature * varpi @ M @ varpi + jump)


def _bar_gradient(varpi, M, b, G, measures, pen) -> np.ndarray:
    y = G.T @ varpi
    d1 = np.array([pen.d1(mu, yl) if not mu.is_null() else 0.0 for mu, yl in zip(measures, y)])
    return -b + pen.curvature * (M @ varpi) + G @ d1


def _solve_bar(M: np.ndarray, b: np.ndarray, G: np.ndarray, measures, pen: Penalty) -> BarSolution:
    M = np.atleast_2d(M)
    a = pen.curvature
    m = b.size
    source = _identical_source(G, measures)
    if source is not None:
        j, mu = source
        if mu is None:
            try:
                varpi = _spd_solve(M, b) / a
            except SingularSigma:
                raise NonCoercive("no quadratic term and no jumps: objective is unbounded") from None
            branch, status = "closed-form quadratic", "root"
        elif m == 1 and M[0, 0] <= 0.0:
            if M[0, 0] < 0.0:
                raise NonCoercive("negative curvature in the sector problem")
            root = _zero_curvature_exposure(float(b[0]), float(j[0]), mu, pen)
            varpi = np.array([root.y / j[0]])
            branch, status = root.branch, root.status
        else:
            try:
                Mb, Mj = _spd_solve(M, b), _spd_solve(M, j)
            except SingularSigma:
                raise NonCoercive("sector curvature matrix is not positive definite") from None
            A, B = float(j @ Mb) / a, float(j @ Mj) / a
            root = solve_exposure(A, B, mu, pen)
            # Phi'(y) from the first-order condition; evaluating it next to a wall loses digits
            slope = (A - root.y) / B if B > 0 else pen.d1(mu, root.y)
            if m == 1 and j[0] != 0.0:
                varpi = np.array([root.y / j[0]])
            else:
                varpi = (Mb - Mj * slope) / a
            branch, status = root.branch, root.status
    else:
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise NonCoercive("sector curvature matrix is not positive definite") from None
        sol = _newton_minimize(b, M, G, measures, pen)
        varpi, branch, status = sol.omega, "newton-m", "root"
    grad = _bar_gradient(varpi, M, b, G, measures, pen)
    return BarSolution(
        varpi=varpi,
        y=G.T @ varpi,
        branch=branch,
        status=status,
        foc_residual=float(np.abs(grad).max()),
        objective=_bar_objective(varpi, M, b, G, measures, pen),
    )


def _prefs_penalty(prefs, r=None) -> Penalty:
    return prefs if isinstance(prefs, Penalty) else penalty_for(prefs, r)


def solve_bar_one_sector(market: OneSectorMarket, prefs: Preferences, mode: Mode = "finite") -> BarSolution:
    """Minimiser of ``-varpi Rbar + (a/2) c varpi^2 + Phi(varpi Jbar)``.

    ``c = kappa1/n`` (``mode="finite"``) or ``v^2 rho`` (``mode="asymptotic"``).
    """
    if not isinstance(market, OneSectorMarket):
        raise TypeError("solve_bar_one_sector needs a OneSectorMarket")
    pen = _prefs_penalty(prefs, market.r)
    c = market.bar_curvature(asymptotic=_asymptotic(mode))
    return _solve_bar(np.array([[c]]), np.array([market.rbar]), np.array([[market.jbar]]), market.measures, pen)


def solve_bar_multisector(market, prefs: Preferences, mode: Mode = "finite") -> BarSolution:
    """Minimiser of the m-dimensional ``Vbar`` objective."""
    mk = _as_multi(market)
    pen = _prefs_penalty(prefs, mk.r)
    M = mk.bar_curvature(asymptotic=_asymptotic(mode))
    return _solve_bar(M, mk.r_sector, mk.j, mk.measures, pen)


def _asymptotic(mode: str) -> bool:
    if mode not in ("finite", "asymptotic"):
        raise ValueError(f"mode must be 'finite' or 'asymptotic', got {mode!r}")
    return mode == "asymptotic"


def bar_objective(market, prefs: Preferences, varpi, mode: Mode = "finite") -> float:
    """Value of the ``Vbar`` objective at ``varpi`` (raises on solvency violation)."""
    mk = _as_multi(market)
    pen = _prefs_penalty(prefs, mk.r)
    M = mk.bar_curvature(asymptotic=_asymptotic(mode))
    return _bar_objective(np.atleast_1d(np.asarray(varpi, dtype=float)), M, mk.r_sector, mk.j, mk.measures, pen)


# ---------------------------------------------------------------------------
# three funds


def _three_funds(solve, R, J, measure, pen: Penalty) -> ThreeFunds:
    SR, SJ = solve(R), solve(J)
    jsj = float(J @ SJ)
    if not jsj > 0:
        raise SingularSigma("jump loading vector is zero")
    jsr = float(J @ SR)
    delta1 = SR - (jsr / jsj) * SJ
    delta2 = SJ / jsj
    root = solve_exposure(jsr / pen.curvature, jsj / pen.curvature, measure, pen)
    return ThreeFunds(delta1, delta2, root.y)


def three_funds(sigma, R, J, measure: LevyJumpMeasure, gamma) -> ThreeFunds:
    """Jump-neutral fund ``delta1``, jump fund ``delta2`` and exposure ``y``.

    The optimum is ``delta1 / a + y * delta2`` where ``a`` is the curvature
    (``gamma`` for power utility).  ``gamma`` may also be a preferences object.
    """
    pen = penalty_for(PowerUtility(gamma, 1.0)) if isinstance(gamma, (int, float)) else _prefs_penalty(gamma)
    R = np.asarray(R, dtype=float)
    J = np.asarray(J, dtype=float).ravel()
    return _three_funds(lambda x: _spd_solve(sigma, x), R, J, measure, pen)


# ---------------------------------------------------------------------------
# assembly


def consumption_constant(prefs: Preferences, omega_R: float, quad: float, jump_penalty: float, r: float):
    """Consumption constant at a (not necessarily optimal) portfolio.

    ``jump_penalty`` is ``sum_l Phi_l(y_l)`` in the family's own units.
    """
    if isinstance(prefs, PowerUtility):
        g = prefs.gamma
        obj = -omega_R + 0.5 * g * quad + jump_penalty
        return prefs.beta / g + (1.0 - g) / g * (obj - r)
    if isinstance(prefs, LogUtility):
        b = prefs.beta
        K2 = (math.log(b) - 1.0 + (r + omega_R - 0.5 * quad - jump_penalty) / b) / b
        return (b, K2)
    if isinstance(prefs, ExponentialUtility):
        q, rq = prefs.q, r * prefs.q
        obj = -omega_R + 0.5 * rq * quad + jump_penalty
        return math.exp(1.0 - prefs.beta / r + q * obj) / r
    raise TypeError(f"unknown preferences {prefs!r}")


def _jump_total(pen: Penalty, measures, y) -> float:
    return math.fsum(pen.value(mu, yl) for mu, yl in zip(measures, y) if not mu.is_null())


def evaluate_policy_constant(market, prefs: Preferences, omega: np.ndarray):
    """Objective value and consumption constant of an arbitrary portfolio ``omega``."""
    pen = penalty_for(prefs, market.r)
    omega = np.asarray(omega, dtype=float)
    y = market.jump_vectors().T @ omega
    if pen.walls:
        for mu, yl in zip(market.measures, y):
            levy.check_solvency(mu, yl)
    omega_R = float(omega @ market.excess_returns())
    quad = market.quad_form(omega)
    jp = _jump_total(pen, market.measures, y)
    obj = -omega_R + 0.5 * pen.curvature * quad + jp
    return obj, consumption_constant(prefs, omega_R, quad, jp, market.r)


def assemble_policy(
    market,
    prefs: Preferences,
    varpi,
    omega_perp: np.ndarray,
    *,
    funds: ThreeFunds | None = None,
    diagnostics: dict | None = None,
    strict: bool = False,
) -> Policy:
    """Combine the ``Vbar`` and ``Vperp`` parts into a full policy with its consumption constant.

    ``K <= 0`` under power utility is flagged in ``diagnostics`` and warned
    about; with ``strict=True`` it raises :class:`TransversalityViolated`.
    """
    mk = _as_multi(market)
    varpi = np.atleast_1d(np.asarray(varpi, dtype=float))
    omega_perp = np.asarray(omega_perp, dtype=float)
    if varpi.shape != (mk.m,) or omega_perp.shape != (mk.n,):
        raise ShapeMismatch("varpi must have one entry per sector and omega_perp one per asset")
    omega_bar = varpi / mk.k
    omega = np.repeat(omega_bar, mk.k) + omega_perp
    pen = penalty_for(prefs, mk.r)
    y = mk.j.T @ varpi
    if pen.walls:
        for mu, yl in zip(mk.measures, y):
            levy.check_solvency(mu, yl)
    omega_R = float(omega @ mk.excess_returns())
    quad = mk.quad_form(omega)
    jp = _jump_total(pen, mk.measures, y)
    objective = -omega_R + 0.5 * pen.curvature * quad + jp
    K = consumption_constant(prefs, omega_R, quad, jp, mk.r)
    diag = dict(diagnostics or {})
    diag["r"] = mk.r
    omega0 = math.nan if isinstance(prefs, ExponentialUtility) else 1.0 - float(omega.sum())
    if isinstance(prefs, PowerUtility):
        diag["transversality_ok"] = bool(K > 0)
        if not K > 0:
            msg = f"consumption constant K = {K:.6g} <= 0: value function and consumption rule are invalid"
            if strict:
                raise TransversalityViolated(msg)
            warnings.warn(msg, TransversalityWarning, stacklevel=2)
    return Policy(omega, omega0, omega_bar, omega_perp, varpi, y, K, funds, objective, prefs, diag)


def _structured_funds(market, pen: Penalty) -> ThreeFunds | None:
    J = market.jump_vectors()
    mus = market.measures
    source = _identical_source(J, mus)
    if source is None or source[1] is None:
        return None
    j, mu = source
    return _three_funds(lambda x: sigma_solve(market, x), market.excess_returns(), j, mu, pen)


def solve_policy(market, prefs: Preferences, *, method: str = "auto", strict: bool = False) -> Policy:
    """Optimal policy for any market kind and utility family.

    ``method="separated"`` (default for structured markets) solves ``Vperp`` in
    closed form and ``Vbar`` in m dimensions; ``method="numeric"`` minimises the
    full n-dimensional objective directly.
    """
    pen = penalty_for(prefs, market.r)
    if isinstance(market, RawMarket):
        # "auto" takes the three-fund or quadratic route when one applies
        return _solve_raw(market, prefs, pen, method, strict)
    if method == "auto":
        method = "separated"
    mk = _as_multi(market)
    if method == "separated":
        bar = _solve_bar(mk.bar_curvature(), mk.r_sector, mk.j, mk.measures, pen)
        perp = solve_orthogonal(mk, pen.curvature)
        diag = {
            "method": "separated",
            "branch": bar.branch,
            "status": bar.status,
            "foc_residual": bar.foc_residual,
        }
        funds = _structured_funds(market, pen)
        pol = assemble_policy(market, prefs, bar.varpi, perp, funds=funds, diagnostics=diag, strict=strict)
        return pol
    if method == "numeric":
        sol = _newton_minimize(mk.excess_returns(), mk.sigma(), mk.jump_vectors(), mk.measures, pen)
        varpi = sol.omega.reshape(mk.m, mk.k).sum(axis=1)
        perp = sol.omega - np.repeat(varpi / mk.k, mk.k)
        diag = {"method": "numeric", "branch": "newton-n", "status": "root", "foc_residual": sol.grad_norm}
        return assemble_policy(market, prefs, varpi, perp, funds=_structured_funds(market, pen), diagnostics=diag, strict=strict)
    raise ValueError(f"unknown method {method!r}")


def _solve_raw(market: RawMarket, prefs, pen: Penalty, method: str, strict: bool) -> Policy:
    J = market.jumps
    source = _identical_source(J, market.measures)
    diag = {"invariance_residual": invariance_residual(market.sigma_matrix, 1)}
    funds = None
    if source is not None and source[1] is not None and method != "numeric":
        j, mu = source
        funds = _three_funds(lambda x: _spd_solve(market.sigma_matrix, x), market.R, j, mu, pen)
        omega = funds.delta1 / pen.curvature + funds.y * funds.delta2
        diag.update(method="three-fund", branch="scalar-exposure", status="root")
    elif source is not None and method != "numeric":
        # no live jump source: the objective is quadratic
        omega = solve_merton(market.sigma_matrix, market.R, pen.curvature)
        diag.update(method="closed-form", branch="closed-form quadratic", status="root")
    else:
        sol = _newton_minimize(market.R, market.sigma_matrix, J, market.measures, pen)
        omega = sol.omega
        diag.update(method="numeric", branch="newton-n", status="root")
        if source is not None and source[1] is not None:
            j, mu = source
            funds = _three_funds(lambda x: _spd_solve(market.sigma_matrix, x), market.R, j, mu, pen)
    y = J.T @ omega
    if pen.walls:
        for mu, yl in zip(market.measures, y):
            levy.check_solvency(mu, yl)
    omega_R = float(omega @ market.R)
    quad = market.quad_form(omega)
    jp = _jump_total(pen, market.measures, y)
    objective = -omega_R + 0.5 * pen.curvature * quad + jp
    grad = -market.R + pen.curvature * (market.sigma_matrix @ omega)
    for l, (mu, yl) in enumerate(zip(market.measures, y)):
        if not mu.is_null():
            grad = grad + J[:, l] * pen.d1(mu, yl)
    diag["foc_residual"] = float(np.abs(grad).max())
    diag["r"] = market.r
    K = consumption_constant(prefs, omega_R, quad, jp, market.r)
    if isinstance(prefs, PowerUtility):
        diag["transversality_ok"] = bool(K > 0)
        if not K > 0:
            msg = f"consumption constant K = {K:.6g} <= 0"
            if strict:
                raise TransversalityViolated(msg)
            warnings.warn(msg, TransversalityWarning, stacklevel=3)
    omega0 = math.nan if isinstance(prefs, ExponentialUtility) else 1.0 - float(omega.sum())
    empty = np.array([])
    return Policy(omega, omega0, empty, empty, empty, y, K, funds, objective, prefs, diag)


def solve_exponential(market, prefs: ExponentialUtility, **kw) -> Policy:
    """CARA policy in dollar amounts, using the market's riskless rate."""
    if not market.r > 0:
        raise NonCoercive("exponential utility needs r > 0")
    return solve_policy(market, prefs, **kw)


def solve_log(market, beta: float | LogUtility, **kw) -> Policy:
    prefs = beta if isinstance(beta, LogUtility) else LogUtility(beta)
    return solve_policy(market, prefs, **kw)
