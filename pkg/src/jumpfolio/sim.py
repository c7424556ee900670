"""Monte Carlo simulation of wealth under a constant policy.

Under a constant policy wealth is a geometric Levy process driven by one
scalar Brownian motion (volatility ``sqrt(w' Sigma w)``) and one compound
Poisson stream per jump source.  Each path is simulated exactly:

* log-wealth increments on the time grid are exact Gaussian draws;
* jumps arrive at uniform times inside ``[0, T]`` and multiply wealth by
  ``1 + y_l z``; the Brownian value at a jump time comes from a bridge between
  the neighbouring grid (or jump) points, so the trapezoid rule for the
  discounted-utility integral can be split exactly at every jump.

Power-law measures are truncated to ``|z| >= eps``; the discarded small jumps
are not compensated.  Each path ``i`` draws from its own Philox stream keyed by
``(seed, i)`` (``(seed, i // 2)`` for antithetic pairs), so results do not
depend on chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeMismatch, TransversalityViolated
from .levy import LevyJumpMeasure
from .market import OneSectorMarket
from .solver import (
    ExponentialUtility,
    LogUtility,
    Policy,
    PowerUtility,
    Preferences,
    evaluate_policy_constant,
    solve_bar_one_sector,
    solve_policy,
)


@dataclass(frozen=True)
class SimConfig:
    paths: int = 100_000
    horizon: float = 10.0
    dt: float = 1.0 / 252.0
    eps: float = 1e-3
    seed: int = 0
    antithetic: bool = False
    x0: float = 1.0
    chunk: int = 2048
    # add the mean log effect of the truncated |z| < eps jumps to the drift
    small_jump_drift: bool = True

    def __post_init__(self):
        if not (isinstance(self.paths, (int, np.integer)) and self.paths >= 1):
            raise ConfigError(f"paths must be a positive integer, got {self.paths}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ConfigError(f"horizon must be >= dt, got T={self.horizon}, dt={self.dt}")
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must be in (0, 1), got {self.eps}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.antithetic and self.paths % 2:
            raise ConfigError("antithetic sampling needs an even number of paths")
        if not self.x0 > 0:
            raise ConfigError("initial wealth must be > 0")
        if self.chunk < 2:
            raise ConfigError("chunk must be >= 2")

    @property
    def steps(self) -> int:
        return max(1, int(math.ceil(self.horizon / self.dt - 1e-9)))

    @property
    def step(self) -> float:
        """Grid spacing actually used: ``horizon / steps`` (at most ``dt``)."""
        return self.horizon / self.steps


@dataclass(frozen=True)
class SimResult:
    value_mean: float
    value_stderr: float
    values: np.ndarray
    terminal_wealth: np.ndarray
    jump_counts: np.ndarray
    bankrupt: np.ndarray
    config: SimConfig

    @property
    def bankruptcies(self) -> int:
        return int(self.bankrupt.sum())

    @property
    def log_terminal(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.terminal_wealth)


@dataclass(frozen=True)
class ValueEstimate:
    estimate: float
    stderr: float
    benchmark: float

    @property
    def z_score(self) -> float:
        diff = self.estimate - self.benchmark
        if self.stderr <= 1e-12 * max(1.0, abs(self.benchmark)):
            return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(self.benchmark)) else math.copysign(math.inf, diff)
        return diff / self.stderr


# ---------------------------------------------------------------------------
# draws


@dataclass
class _Chunk:
    xi: np.ndarray  # (P, S) standard normals for grid increments
    jp: np.ndarray  # jump path index (local), sorted by (path, time)
    js: np.ndarray  # grid step containing the jump
    jt: np.ndarray  # jump time
    jz: np.ndarray  # amplitude
    jl: np.ndarray  # source index
    jb: np.ndarray  # Brownian bridge value W(t) - W(t_s), standard units
    jrank: np.ndarray  # position of the jump inside its (path, step) group
    counts: np.ndarray


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _draw_path(rng, S, T, measures, rates, eps):
    xi = rng.standard_normal(S)
    times, sizes, sources = [], [], []
    for l, (mu, rate) in enumerate(zip(measures, rates)):
        if rate <= 0:
            continue
        n = int(rng.poisson(rate * T))
        times.append(rng.random(n) * T)
        sizes.append(mu.sample(rng, n, eps))
        sources.append(np.full(n, l))
    t = np.concatenate(times) if times else np.empty(0)
    z = np.concatenate(sizes) if sizes else np.empty(0)
    src = np.concatenate(sources) if sources else np.empty(0, dtype=int)
    eta = rng.standard_normal(t.size)
    return xi, t, z, src, eta


def _draw_chunk(start: int, count: int, cfg: SimConfig, measures, rates) -> _Chunk:
    S, h, T = cfg.steps, cfg.step, cfg.horizon
    xi = np.empty((count, S))
    parts = []
    prev = None
    for i in range(count):
        gi = start + i
        if cfg.antithetic and gi % 2 == 1 and prev is not None:
            x, t, z, src, eta = prev
            x, eta = -x, -eta
        else:
            x, t, z, src, eta = _draw_path(_stream(cfg.seed, gi // 2 if cfg.antithetic else gi), S, T, measures, rates, cfg.eps)
            prev = (x, t, z, src, eta)
        xi[i] = x
        parts.append((np.full(t.size, i), t, z, src, eta))
    jp = np.concatenate([p[0] for p in parts]).astype(np.int64)
    jt = np.concatenate([p[1] for p in parts])
    jz = np.concatenate([p[2] for p in parts])
    jl = np.concatenate([p[3] for p in parts]).astype(np.int64)
    eta = np.concatenate([p[4] for p in parts])
    order = np.lexsort((jt, jp))
    jp, jt, jz, jl, eta = jp[order], jt[order], jz[order], jl[order], eta[order]
    js = np.minimum((jt / h).astype(np.int64), S - 1)
    counts = np.bincount(jp, minlength=count)

    # rank inside (path, step) groups
    key = jp * S + js
    new_group = np.ones(key.size, dtype=bool)
    new_group[1:] = key[1:] != key[:-1]
    idx = np.arange(key.size)
    group_start = np.maximum.accumulate(np.where(new_group, idx, 0)) if key.size else idx
    rank = idx - group_start

    # sequential Brownian bridge inside each step, conditioned on the grid increment
    jb = np.empty(key.size)
    dW = xi[jp, js] * math.sqrt(h) if key.size else np.empty(0)
    t_right = (js + 1) * h
    for r in range(int(rank.max()) + 1 if key.size else 0):
        sel = rank == r
        if r == 0:
            tl, wl = js[sel] * h, np.zeros(sel.sum())
        else:
            prev_idx = idx[sel] - 1
            tl, wl = jt[prev_idx], jb[prev_idx]
        tau, tr = jt[sel], t_right[sel]
        span = np.maximum(tr - tl, 1e-300)
        frac = (tau - tl) / span
        var = np.maximum((tau - tl) * (tr - tau) / span, 0.0)
        jb[sel] = wl + frac * (dW[sel] - wl) + np.sqrt(var) * eta[sel]
    return _Chunk(xi, jp, js, jt, jz, jl, jb, rank, counts)


# ---------------------------------------------------------------------------
# evaluation of one policy on a chunk of draws


@dataclass(frozen=True)
class _PolicyParams:
    drift: float  # r + w'R - K
    vol: float
    y: np.ndarray
    K: float
    utility: Callable[[np.ndarray], np.ndarray] | None  # U(K e^L) from log-wealth L
    beta: float
    infinite_ruin: bool
    growth: float | None = None  # d log(utility) / d log(wealth) for power utility


def _utility_of_log(prefs: Preferences | None, K: float):
    if prefs is None:
        return None, False
    if isinstance(prefs, PowerUtility):
        g = prefs.gamma
        logK = math.log(K)
        return (lambda L: np.exp((1.0 - g) * (logK + L)) / (1.0 - g)), g > 1.0
    if isinstance(prefs, LogUtility):
        logK = math.log(K)
        return (lambda L: logK + L), True
    raise ConfigError("simulation supports power and log utility only")


def _params(market, omega: np.ndarray, K: float, prefs: Preferences | None, eps: float = 0.0) -> _PolicyParams:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (market.n,):
        raise ShapeMismatch(f"policy has {omega.shape} weights for {market.n} assets")
    drift = market.r + float(omega @ market.excess_returns()) - K
    vol = math.sqrt(max(market.quad_form(omega), 0.0))
    y = market.jump_vectors().T @ omega
    if eps > 0:
        # jumps below eps are not drawn; their mean log effect goes into the drift
        drift += sum(mu.truncated_log_drift(float(yl), eps) for mu, yl in zip(market.measures, y))
    util, ruin = _utility_of_log(prefs, K) if prefs is not None and K > 0 else (None, False)
    beta = prefs.beta if prefs is not None else 0.0
    return _PolicyParams(drift, vol, y, K, util, beta, ruin, 1.0 - prefs.gamma if isinstance(prefs, PowerUtility) else None)


def _segment(g0, g1, x, dt):
    """Integral over one step of ``g``, exact when ``log g`` is linear with increment ``x``.

    ``x`` is None for integrands that are not exponential; the trapezoid is used then.
    """
    trap = 0.5 * dt * (g0 + g1)
    if x is None:
        return trap
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        exact = (g1 - g0) / x
        exact *= dt
    # for tiny or infinite (ruin) exponents the trapezoid is as good or the only option
    keep = np.abs(x) > 1e-6
    keep &= np.isfinite(exact)
    return np.where(keep, exact, trap)


def _exponent(pp, dL, dt):
    return None if pp.growth is None else pp.growth * dL - pp.beta * dt


def _evaluate(ch: _Chunk, pp: _PolicyParams, cfg: SimConfig):
    P, S = ch.xi.shape
    h = cfg.step
    mu = pp.drift - 0.5 * pp.vol ** 2
    factor = 1.0 + pp.y[ch.jl] * ch.jz if ch.jl.size else np.empty(0)
    ruin = factor <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        lf = np.where(ruin, -np.inf, np.log(np.where(ruin, 1.0, factor)))
    incr = mu * h + pp.vol * math.sqrt(h) * ch.xi
    if lf.size:
        np.add.at(incr, (ch.jp, ch.js), lf)
    L = np.empty((P, S + 1))
    L[:, 0] = math.log(cfg.x0)
    np.cumsum(incr, axis=1, out=L[:, 1:])
    L[:, 1:] += L[:, :1]
    bankrupt = np.zeros(P, dtype=bool)
    if ruin.any():
        bankrupt[ch.jp[ruin]] = True

    values = np.full(P, math.nan)
    if pp.utility is not None:
        t = np.arange(S + 1) * h
        disc = np.exp(-pp.beta * t)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            G = pp.utility(L) * disc
            x = _exponent(pp, incr, h)
            values = _segment(G[:, :-1], G[:, 1:], x, h).sum(axis=1)
            if lf.size:
                values += _jump_correction(ch, pp, L, lf, h)
        if pp.infinite_ruin:
            values[bankrupt] = -math.inf
    return values, np.exp(L[:, -1]), bankrupt


def _jump_correction(ch: _Chunk, pp: _PolicyParams, L: np.ndarray, lf: np.ndarray, h: float) -> np.ndarray:
    """Re-integrate steps containing jumps piecewise, splitting at each jump time."""
    mu = pp.drift - 0.5 * pp.vol ** 2
    beta = pp.beta
    U = pp.utility

    def g(t, logw):
        return U(logw) * np.exp(-beta * t)

    p, s, tau, rank = ch.jp, ch.js, ch.jt, ch.jrank
    n = p.size
    t_left = s * h
    L_left = L[p, s]
    cum_before = np.zeros(n)
    for r in range(1, int(rank.max()) + 1):
        sel = np.flatnonzero(rank == r)
        cum_before[sel] = cum_before[sel - 1] + lf[sel - 1]
    pre = L_left + mu * (tau - t_left) + pp.vol * ch.jb + cum_before
    post = pre + lf

    t_prev = np.where(rank == 0, t_left, np.roll(tau, 1))
    L_prev = np.where(rank == 0, L_left, np.roll(post, 1))
    seg = _segment(g(t_prev, L_prev), g(tau, pre), _exponent(pp, pre - L_prev, tau - t_prev), tau - t_prev)

    last = np.ones(n, dtype=bool)
    last[:-1] = rank[1:] == 0
    t_right = (s + 1) * h
    L_right = L[p, s + 1]
    with np.errstate(invalid="ignore"):
        x_tail = _exponent(pp, L_right - post, t_right - tau)
        x_full = _exponent(pp, L_right - L_left, h)
    tail = np.where(last, _segment(g(tau, post), g(t_right, L_right), x_tail, t_right - tau), 0.0)
    default = np.where(last, _segment(g(t_left, L_left), g(t_right, L_right), x_full, h), 0.0)
    out = np.zeros(L.shape[0])
    np.add.at(out, p, seg + tail - default)
    return out


# ---------------------------------------------------------------------------
# public API


def _omega_K(policy, K):
    if isinstance(policy, Policy):
        omega = policy.omega
        if K is None:
            K = policy.K[0] if isinstance(policy.K, tuple) else policy.K
        return omega, float(K), policy.preferences
    if K is None:
        raise ConfigError("a consumption constant is needed for a bare weight vector")
    return np.asarray(policy, dtype=float), float(K), None


def _jump_setup(market, cfg: SimConfig):
    measures: Sequence[LevyJumpMeasure] = market.measures
    rates = [0.0 if mu.is_null() else mu.jump_rate(cfg.eps) for mu in measures]
    return measures, rates


def simulate_many(market, weights: Sequence[np.ndarray], Ks: Sequence[float], prefs: Preferences | None, config: SimConfig):
    """Simulate several constant policies on common random numbers.

    Returns per-policy lists of (values, terminal wealth, bankrupt) arrays plus jump counts.
    """
    if isinstance(prefs, ExponentialUtility):
        raise ConfigError("exponential-utility wealth is arithmetic; simulation is not supported")
    params = [_params(market, w, K, prefs, config.eps if config.small_jump_drift else 0.0) for w, K in zip(weights, Ks)]
    measures, rates = _jump_setup(market, config)
    vals = [[] for _ in params]
    terms = [[] for _ in params]
    bank = [[] for _ in params]
    counts = []
    chunk = config.chunk + (config.chunk % 2)
    for start in range(0, config.paths, chunk):
        count = min(chunk, config.paths - start)
        ch = _draw_chunk(start, count, config, measures, rates)
        counts.append(ch.counts)
        for i, pp in enumerate(params):
            v, x, b = _evaluate(ch, pp, config)
            vals[i].append(v)
            terms[i].append(x)
            bank[i].append(b)
    cat = np.concatenate
    return [cat(v) for v in vals], [cat(t) for t in terms], [cat(b) for b in bank], cat(counts)


def _mean_stderr(values: np.ndarray, antithetic: bool) -> tuple[float, float]:
    samples = values.reshape(-1, 2).mean(axis=1) if antithetic else values
    n = samples.size
    mean = float(np.sum(samples) / n)
    if n < 2 or not math.isfinite(mean):
        return mean, 0.0 if n < 2 else math.nan
    return mean, float(np.std(samples, ddof=1) / math.sqrt(n))


def simulate_wealth(
    market, policy: Policy | np.ndarray, K: float | None = None, config: SimConfig | None = None
) -> SimResult:
    """Simulate wealth and discounted utility under a constant policy.

    ``policy`` may be a :class:`Policy` (its preferences define the utility) or a
    bare weight vector, in which case only wealth statistics are produced.
    """
    config = config or SimConfig()
    omega, K, prefs = _omega_K(policy, K)
    if K < 0:
        raise ConfigError(f"consumption constant must be >= 0, got {K}")
    vals, terms, bank, counts = simulate_many(market, [omega], [K], prefs, config)
    mean, se = _mean_stderr(vals[0], config.antithetic) if prefs is not None and K > 0 else (math.nan, math.nan)
    return SimResult(mean, se, vals[0], terms[0], counts, bank[0], config)


def value_benchmark(prefs: PowerUtility, K: float, x0: float, horizon: float) -> float:
    """``L(x0) (1 - exp(-K T))`` with ``L(x) = K^-gamma x^(1-gamma) / (1-gamma)``."""
    g = prefs.gamma
    return K ** -g * x0 ** (1.0 - g) / (1.0 - g) * -math.expm1(-K * horizon)


def default_horizon(K: float, tail: float = 1e-3) -> float:
    """Smallest ``T`` with ``exp(-K T) <= tail``."""
    if not K > 0:
        raise TransversalityViolated(f"K = {K} <= 0")
    return math.log(1.0 / tail) / K


def estimate_value(market, policy: Policy, prefs: PowerUtility, config: SimConfig) -> ValueEstimate:
    """Monte Carlo discounted utility of ``policy`` and its analytic benchmark."""
    if not isinstance(prefs, PowerUtility):
        raise ConfigError("value benchmark is available for power utility")
    K = float(policy.K)
    if not K > 0:
        raise TransversalityViolated(f"K = {K:.6g} <= 0: the value identity does not hold")
    vals, _, _, _ = simulate_many(market, [policy.omega], [K], prefs, config)
    mean, se = _mean_stderr(vals[0], config.antithetic)
    return ValueEstimate(mean, se, value_benchmark(prefs, K, config.x0, config.horizon))


@dataclass(frozen=True)
class DirectionResult:
    kind: str
    norm: float
    K: float
    difference: float  # optimal minus perturbed
    stderr: float

    @property
    def dominated(self) -> bool:
        return self.difference >= -2.0 * self.stderr


@dataclass(frozen=True)
class OptimalityReport:
    optimal_value: float
    optimal_stderr: float
    rows: tuple[DirectionResult, ...] = field(default_factory=tuple)

    @property
    def fraction_dominated(self) -> float:
        return sum(r.dominated for r in self.rows) / len(self.rows) if self.rows else 1.0


def _perp_projection(market, d: np.ndarray) -> np.ndarray:
    m = getattr(market, "m", 1)
    blocks = d.reshape(m, -1)
    return (blocks - blocks.mean(axis=1, keepdims=True)).ravel()


def optimality_check(
    market,
    prefs: PowerUtility,
    policy: Policy,
    perturbation: float = 0.1,
    directions: int = 20,
    config: SimConfig | None = None,
    perp_directions: int = 1,
    direction_seed: int = 12345,
) -> OptimalityReport:
    """Compare the optimal policy with perturbed constant policies on common random numbers.

    Each perturbed policy ``w* + d`` with ``|d| = perturbation |w*|`` consumes at
    its own constant ``K(w* + d)``.  ``perp_directions`` extra directions are
    projected onto ``Vperp`` (structured markets only).
    """
    config = config or SimConfig()
    omega = policy.omega
    size = perturbation * float(np.linalg.norm(omega))
    rng = np.random.default_rng(direction_seed)
    kinds, weights = [], []
    structured = not hasattr(market, "sigma_matrix")
    for i in range(directions + (perp_directions if structured else 0)):
        kind = "random" if i < directions else "perp"
        for _ in range(100):
            d = rng.standard_normal(omega.size)
            if kind == "perp":
                d = _perp_projection(market, d)
            nd = float(np.linalg.norm(d))
            d = d / nd * size if nd > 0 else d
            try:
                _, K = evaluate_policy_constant(market, prefs, omega + d)
            except ValueError:
                continue
            if K > 0:
                break
        else:
            raise ConfigError("could not find an admissible perturbation")
        kinds.append(kind)
        weights.append(omega + d)
    Ks = [float(policy.K)] + [evaluate_policy_constant(market, prefs, w)[1] for w in weights]
    vals, _, _, _ = simulate_many(market, [omega] + weights, Ks, prefs, config)
    opt_mean, opt_se = _mean_stderr(vals[0], config.antithetic)
    rows = []
    for kind, w, K, v in zip(kinds, weights, Ks[1:], vals[1:]):
        diff, se = _mean_stderr(vals[0] - v, config.antithetic)
        rows.append(DirectionResult(kind, float(np.linalg.norm(w - omega)), K, diff, se))
    return OptimalityReport(opt_mean, opt_se, tuple(rows))


# ---------------------------------------------------------------------------
# large-n scaling


@dataclass(frozen=True)
class ScalingRow:
    n: int
    drift: float
    variance: float
    y: float


@dataclass(frozen=True)
class ScalingTable:
    rows: tuple[ScalingRow, ...]
    y_limit: float
    drift_slope: float
    variance_slope: float


def dispersed_returns(n: int, c: float) -> np.ndarray:
    """Alternating ``+c, -c`` orthogonal returns (a trailing 0 when n is odd)."""
    out = np.where(np.arange(n) % 2 == 0, c, -c).astype(float)
    if n % 2:
        out[-1] = 0.0
    return out


def _slope(ns, vals) -> float:
    x, y = np.log(np.asarray(ns, float)), np.log(np.abs(np.asarray(vals, float)))
    return float(np.polyfit(x, y, 1)[0])


def scaling_check(
    family: Callable[[int], OneSectorMarket], prefs: PowerUtility, ns: Sequence[int], fit_from: int = 100
) -> ScalingTable:
    """Portfolio drift, variance and jump exposure along a family of markets indexed by ``n``.

    The quantities follow from the solved policy in closed form, so no paths are simulated.
    """
    rows = []
    for n in ns:
        mkt = family(int(n))
        pol = solve_policy(mkt, prefs)
        rows.append(
            ScalingRow(int(n), float(pol.omega @ mkt.excess_returns()), mkt.quad_form(pol.omega), float(pol.y[0]))
        )
    big = [r for r in rows if r.n >= fit_from]
    if len(big) < 2:
        raise ConfigError("need at least two sizes at or above fit_from to fit a slope")
    last = family(int(ns[-1]))
    y_limit = last.jbar * solve_bar_one_sector(last, prefs, "asymptotic").scalar
    return ScalingTable(
        tuple(rows),
        y_limit,
        _slope([r.n for r in big], [r.drift for r in big]),
        _slope([r.n for r in big], [r.variance for r in big]),
    )
