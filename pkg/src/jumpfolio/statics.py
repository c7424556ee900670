"""Comparative statics of the optimal sector weight ``varpi``.

The closed-form results assume the classic negative-jump regime: power utility
with ``gamma = 2``, a power-law measure with only positive amplitudes
(``lambda_minus = 0``) and a negative loading ``jbar < 0``.  They are written
for a generic curvature ``c`` of the sector problem, where ``c = kappa1/n`` for
finite ``n`` and ``c = v^2 rho`` in the large-n limit.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from . import levy
from .errors import JumpfolioError, NonPositiveExcessReturn, OutOfRegime, SolvencyViolation
from .levy import AsymmetricPowerLaw, LevyJumpMeasure
from .market import MultiSectorMarket, OneSectorMarket
from .solver import Mode, PowerUtility, bar_objective, solve_bar_multisector, solve_bar_one_sector, solve_policy

Regime = Literal["lambda_to_zero", "lambda_to_infinity", "small_lambda"]
Wrt = Literal["lambda", "jump_size", "gamma"]

SWEEP_PARAMETERS = ("lambda", "lambda_plus", "lambda_minus", "jbar", "gamma", "rho", "v", "rbar", "n")


# ---------------------------------------------------------------------------
# thresholds


def critical_lambda(rbar: float, jbar: float, measure: LevyJumpMeasure) -> float:
    """Intensity at which the optimal sector weight changes sign.

    Only the shape of ``measure`` matters; it is rescaled to unit intensity.
    """
    if rbar <= 0:
        raise NonPositiveExcessReturn(f"rbar = {rbar} <= 0: the optimal weight is never positive")
    if not jbar < 0:
        raise OutOfRegime("critical intensity needs jbar < 0")
    _require_positive_support(measure)
    return rbar / (abs(jbar) * levy.mean_positive_jump(measure.unit()))


def critical_jump_size(rbar: float, lam: float, measure: LevyJumpMeasure) -> float:
    """Loading ``jbar`` at which the optimal weight changes sign, ``-rbar / (lam * m1)``.

    ``measure`` gives the jump-size shape; ``lam`` the intensity.  Raises
    :class:`OutOfRegime` when the ratio is at least 1: then no admissible
    ``jbar`` in (-1, 0) makes the weight negative.
    """
    if rbar <= 0:
        raise NonPositiveExcessReturn(f"rbar = {rbar} <= 0")
    if not lam > 0:
        raise OutOfRegime("need a positive intensity")
    _require_positive_support(measure)
    ratio = rbar / (lam * levy.mean_positive_jump(measure.unit()))
    if ratio >= 1.0:
        raise OutOfRegime(f"rbar / (lam m1) = {ratio:.6g} >= 1: weight is positive for every jbar")
    return -ratio


def _require_positive_support(measure: LevyJumpMeasure) -> None:
    if measure.z_inf < 0:
        raise OutOfRegime("regime needs a jump measure without negative amplitudes")


# ---------------------------------------------------------------------------
# closed forms in the gamma = 2 negative-jump regime


def _regime(market: OneSectorMarket, prefs: PowerUtility | None = None):
    mu = market.measure
    if prefs is not None and prefs.gamma != 2.0:
        raise OutOfRegime("closed form needs gamma = 2")
    if not isinstance(mu, AsymmetricPowerLaw) or mu.lam_minus != 0.0:
        raise OutOfRegime("closed form needs a power-law measure with lambda_minus = 0")
    if not market.jbar < 0:
        raise OutOfRegime("closed form needs jbar < 0")
    return mu.lam_plus


def closed_form_varpi(rbar: float, c: float, jbar: float, lam: float) -> float:
    """Optimal ``varpi`` for gamma = 2, ``lam dz/z`` on (0, 1], ``jbar < 0``."""
    s = abs(jbar)
    if not (jbar < 0 and c > 0 and lam >= 0):
        raise OutOfRegime("need jbar < 0, c > 0, lam >= 0")
    u = 2.0 * c / s
    root = math.hypot(u - rbar, math.sqrt(8.0 * c * lam))
    # smaller quadratic root, rationalised; the denominator is >= 2 max(u, rbar) > 0
    num = (4.0 * u * rbar - 8.0 * c * lam) / (u + rbar + root)
    return num / (4.0 * c)


def _curvature(market: OneSectorMarket, mode: Mode) -> float:
    return market.bar_curvature(asymptotic=mode == "asymptotic")


@dataclass(frozen=True)
class AsymptoticResult:
    regime: str
    value: float
    kink_binding: bool | None = None
    slope: float | None = None
    detail: str = ""


def asymptotic_behavior(market: OneSectorMarket, regime: Regime, mode: Mode = "asymptotic") -> AsymptoticResult:
    """Limits and rates of ``varpi`` in the intensity, gamma = 2 negative-jump regime.

    * ``lambda_to_zero``: ``min(rbar / (2c), 1/|jbar|)``; ``kink_binding`` tells
      whether the solvency branch is the smaller one.
    * ``lambda_to_infinity``: coefficient ``-1/sqrt(2c)`` with ``varpi ~ coef * sqrt(lambda)``.
    * ``small_lambda``: first-order expansion ``value + slope * lambda``.
    """
    _regime(market)
    c = _curvature(market, mode)
    if not c > 0:
        raise OutOfRegime("sector curvature must be positive")
    diffusive, size = market.rbar / (2.0 * c), 1.0 / abs(market.jbar)
    if regime == "lambda_to_zero":
        return AsymptoticResult(regime, min(diffusive, size), kink_binding=size < diffusive)
    if regime == "lambda_to_infinity":
        return AsymptoticResult(regime, -1.0 / math.sqrt(2.0 * c), detail="varpi ~ value * sqrt(lambda)")
    if regime == "small_lambda":
        slope = market.jbar / abs(2.0 * c + market.rbar * market.jbar)
        return AsymptoticResult(
            regime, min(diffusive, size), kink_binding=size < diffusive, slope=slope, detail="varpi ~ value + slope * lambda"
        )
    raise ValueError(f"unknown regime {regime!r}")


def sensitivity(market: OneSectorMarket, prefs: PowerUtility, wrt: Wrt, mode: Mode = "asymptotic") -> float:
    """Derivative of the optimal ``varpi`` with respect to ``lambda``, ``jbar`` or ``gamma``.

    The intensity and jump-size derivatives are closed forms valid in the
    gamma = 2 negative-jump regime.  The gamma derivative follows from the
    implicit function theorem and holds for any measure.
    """
    c = _curvature(market, mode)
    if wrt == "gamma":
        sol = solve_bar_one_sector(market, prefs, mode)
        w, y = sol.scalar, float(sol.y[0])
        g, jb, mu = prefs.gamma, market.jbar, market.measure
        num = c * w + jb * levy.psi_log_moment(mu, g, y)
        den = g * c + jb * jb * levy.psi_second(mu, g, y)
        return -num / den
    lam = _regime(market, prefs)
    rbar, jbar = market.rbar, market.jbar
    disc = (2.0 * c + rbar * jbar) ** 2 + 8.0 * c * jbar * jbar * lam
    if not disc > 0:
        raise OutOfRegime("derivative denominator vanishes at this point")
    if wrt == "lambda":
        return jbar / math.sqrt(disc)
    if wrt == "jump_size":
        return (1.0 - (2.0 * c + jbar * rbar) / math.sqrt(disc)) / (2.0 * jbar * jbar)
    raise ValueError(f"unknown sensitivity {wrt!r}")


# ---------------------------------------------------------------------------
# large n


@dataclass(frozen=True)
class LargeNResult:
    varpi_inf: float
    ns: tuple[int, ...]
    varpi_n: tuple[float, ...]

    @property
    def gaps(self) -> tuple[float, ...]:
        return tuple(abs(w - self.varpi_inf) for w in self.varpi_n)


def large_n_limit(market: OneSectorMarket, prefs: PowerUtility, ns: Sequence[int] | None = None) -> LargeNResult:
    """``varpi_inf`` and the finite-n values on a geometric grid of asset counts."""
    if ns is None:
        ns = tuple(int(round(10 ** (e / 2))) for e in range(2, 9))
    inf = solve_bar_one_sector(market, prefs, "asymptotic").scalar
    vals = tuple(solve_bar_one_sector(market.with_n(int(n)), prefs, "finite").scalar for n in ns)
    return LargeNResult(inf, tuple(int(n) for n in ns), vals)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    """Outer-product grid over market/preference parameters.

    ``grid`` maps names from ``SWEEP_PARAMETERS`` to value lists.  ``lambda``
    rescales the measure to that total intensity; ``lambda_plus`` and
    ``lambda_minus`` apply to power-law measures only.
    """

    market: OneSectorMarket
    prefs: PowerUtility
    grid: dict[str, Sequence[float]]
    mode: Mode = "asymptotic"

    def __post_init__(self):
        unknown = set(self.grid) - set(SWEEP_PARAMETERS)
        if unknown:
            raise OutOfRegime(f"unknown sweep parameters {sorted(unknown)}")

    @property
    def parameters(self) -> tuple[str, ...]:
        return tuple(p for p in SWEEP_PARAMETERS if p in self.grid)


@dataclass(frozen=True)
class SweepRow:
    point: dict[str, float]
    varpi: float
    y: float
    objective: float
    K: float
    status: str
    message: str = ""


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple[SweepRow, ...] = field(default_factory=tuple)

    def column(self, name: str) -> np.ndarray:
        if name in SWEEP_PARAMETERS:
            return np.array([row.point[name] for row in self.rows])
        return np.array([getattr(row, name) for row in self.rows])


def _set_lambda(mu: LevyJumpMeasure, lam: float) -> LevyJumpMeasure:
    if isinstance(mu, AsymmetricPowerLaw):
        return mu.scaled(lam / mu.intensity) if mu.intensity > 0 else AsymmetricPowerLaw(lam, 0.0)
    return dataclasses.replace(mu, lam=lam)


def _apply(market: OneSectorMarket, prefs: PowerUtility, point: dict[str, float]):
    mkt_kw: dict = {}
    mu = market.measure
    for name, val in point.items():
        if name == "lambda":
            mu = _set_lambda(mu, val)
        elif name in ("lambda_plus", "lambda_minus"):
            if not isinstance(mu, AsymmetricPowerLaw):
                raise OutOfRegime(f"{name} applies to power-law measures only")
            mu = dataclasses.replace(mu, **{"lam_plus" if name == "lambda_plus" else "lam_minus": val})
        elif name == "n":
            if float(val) != int(val):
                raise OutOfRegime(f"n must be an integer, got {val}")
            mkt_kw["n"] = int(val)
        elif name != "gamma":
            mkt_kw[name] = val
    if "n" in mkt_kw and mkt_kw["n"] != market.n:
        mkt_kw["r_perp"] = None
    market = dataclasses.replace(market, measure=mu, **mkt_kw)
    if "gamma" in point:
        prefs = PowerUtility(point["gamma"], prefs.beta)
    return market, prefs


def solve_point(market: OneSectorMarket, prefs: PowerUtility, mode: Mode) -> SweepRow:
    bar = solve_bar_one_sector(market, prefs, mode)
    K = math.nan
    if mode == "finite":
        K = float(solve_policy(market, prefs).K)
    return SweepRow({}, bar.scalar, float(bar.y[0]), bar.objective, K, bar.status)


def sweep(spec: SweepSpec) -> SweepResult:
    """One independent solve per grid point; failures are recorded in ``status``."""
    names = spec.parameters
    rows = []
    for values in itertools.product(*(spec.grid[p] for p in names)):
        point = {p: float(v) for p, v in zip(names, values)}
        try:
            market, prefs = _apply(spec.market, spec.prefs, point)
            row = solve_point(market, prefs, spec.mode)
            row = dataclasses.replace(row, point=point)
        except (JumpfolioError, ValueError) as exc:
            row = SweepRow(point, math.nan, math.nan, math.nan, math.nan, type(exc).__name__, str(exc))
        rows.append(row)
    return SweepResult(spec, tuple(rows))


# ---------------------------------------------------------------------------
# objective curves f_n -> f_inf


@dataclass(frozen=True)
class ObjectiveCurves:
    varpi: np.ndarray
    ns: tuple[int, ...]
    f_n: np.ndarray  # len(ns) x len(varpi)
    f_inf: np.ndarray
    argmin_n: tuple[float, ...]
    argmin_inf: float

    @property
    def max_gaps(self) -> tuple[float, ...]:
        """Largest ``|f_n - f_inf|`` over the grid points admissible for both."""
        return tuple(float(np.nanmax(np.abs(row - self.f_inf))) for row in self.f_n)


def _curve(market: OneSectorMarket, prefs: PowerUtility, grid: np.ndarray, mode: Mode) -> np.ndarray:
    out = np.full(grid.size, math.nan)
    for i, w in enumerate(grid):
        try:
            out[i] = bar_objective(market, prefs, [w], mode)
        except SolvencyViolation:
            pass
    return out


def objective_curves(
    market: OneSectorMarket, prefs: PowerUtility, varpi: Iterable[float], ns: Sequence[int]
) -> ObjectiveCurves:
    """Scalar sector objective for each ``n`` in ``ns`` and in the large-n limit."""
    grid = np.asarray(list(varpi), float)
    sized = [market.with_n(int(n)) for n in ns]
    f_n = np.vstack([_curve(m, prefs, grid, "finite") for m in sized])
    f_inf = _curve(market, prefs, grid, "asymptotic")
    arg_n = tuple(solve_bar_one_sector(m, prefs, "finite").scalar for m in sized)
    arg_inf = solve_bar_one_sector(market, prefs, "asymptotic").scalar
    return ObjectiveCurves(grid, tuple(int(n) for n in ns), f_n, f_inf, arg_n, arg_inf)


# ---------------------------------------------------------------------------
# two-sector objective surface


def objective_surface(
    market: MultiSectorMarket, prefs: PowerUtility, grid1: Iterable[float], grid2: Iterable[float], mode: Mode = "finite"
) -> np.ndarray:
    """Sector objective on a (varpi_1, varpi_2) grid; NaN where solvency fails."""
    if market.m != 2:
        raise OutOfRegime("surface needs exactly two sectors")
    g1, g2 = np.asarray(list(grid1), float), np.asarray(list(grid2), float)
    out = np.full((g1.size, g2.size), math.nan)
    for i, a in enumerate(g1):
        for j, b in enumerate(g2):
            try:
                out[i, j] = bar_objective(market, prefs, [a, b], mode)
            except SolvencyViolation:
                pass
    return out


def surface_minimizer(market: MultiSectorMarket, prefs: PowerUtility, mode: Mode = "finite") -> np.ndarray:
    return solve_bar_multisector(market, prefs, mode).varpi
