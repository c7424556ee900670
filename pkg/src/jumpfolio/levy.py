"""Levy jump measures and the jump-penalty functionals.

A measure object always represents the *full* jump measure ``lambda * nu``:
its intensity (``lam`` or ``lam_plus``/``lam_minus``) is part of the object,
and every functional below integrates against it.  Callers never multiply a
functional by a separate intensity.

For power utility with risk aversion ``gamma`` the penalty is

    psi(y) = -1/(1-gamma) * int [(1 + y z)^(1-gamma) - 1] lambda nu(dz)

with derivatives ``psi'(y) = -int z (1+yz)^-gamma`` and
``psi''(y) = gamma int z^2 (1+yz)^(-gamma-1)``.  The log-utility penalty is the
``gamma -> 1`` limit ``-int log(1+yz)``, and the CARA penalty is
``int [exp(-rq y z) - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import EmptyPositiveSupport, InvalidGamma, InvalidMeasure, SolvencyViolation

QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-13
QUAD_LIMIT = 200

Kernel = Callable[[float], float]


def _quad(fn: Kernel, a: float, b: float) -> float:
    val, _ = integrate.quad(fn, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return val


def _finite(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidMeasure(f"{name} must be finite, got {x}")
    return x


class LevyJumpMeasure:
    """Base class for the supported jump measures."""

    @property
    def z_inf(self) -> float:
        raise NotImplementedError

    @property
    def z_sup(self) -> float:
        raise NotImplementedError

    @property
    def intensity(self) -> float:
        """Scale parameter that :meth:`scaled` multiplies."""
        raise NotImplementedError

    def is_null(self) -> bool:
        return self.intensity == 0.0

    def scaled(self, factor: float) -> "LevyJumpMeasure":
        raise NotImplementedError

    def with_intensity(self, lam: float) -> "LevyJumpMeasure":
        """Same jump-size shape, total intensity set to ``lam``."""
        if self.intensity == 0.0:
            raise InvalidMeasure("cannot rescale a measure with zero intensity")
        return self.scaled(lam / self.intensity)

    def unit(self) -> "LevyJumpMeasure":
        return self.with_intensity(1.0)

    def integrate(self, f: Kernel, f_over_z: Kernel) -> float:
        """``int f(z) lambda nu(dz)``.

        ``f_over_z`` must equal ``f(z)/z`` and be smooth at 0; it is only used by
        measures with a ``dz/z`` density.
        """
        raise NotImplementedError

    def positive_moment(self) -> float:
        raise NotImplementedError

    # simulation support
    def jump_rate(self, eps: float) -> float:
        """Arrival rate of simulated jumps (after truncating ``|z| < eps`` where needed)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int, eps: float) -> np.ndarray:
        raise NotImplementedError

    def truncated_log_drift(self, y: float, eps: float) -> float:
        """``int log(1 + y z) nu(dz)`` over the jumps dropped by ``sample``."""
        return 0.0

    # optional exact forms, None when unavailable
    def _psi_closed(self, gamma: float, y: float) -> float | None:
        return None

    def _psi_prime_closed(self, gamma: float, y: float) -> float | None:
        return None

    def _psi_second_closed(self, gamma: float, y: float) -> float | None:
        return None


def _power_E(gamma: float, y: float) -> float:
    """``int_0^1 (1 + y z)^-gamma dz``."""
    if abs(y) < 1e-8:
        return 1.0 - 0.5 * gamma * y + gamma * (gamma + 1.0) * y * y / 6.0
    a = 1.0 - gamma
    return math.expm1(a * math.log1p(y)) / (a * y)


def _power_H(gamma: float, y: float) -> float | None:
    """``int_0^1 h(y z) dz / z`` with ``h(x) = -((1+x)^(1-gamma) - 1)/(1-gamma)``."""
    if y == 0.0:
        return 0.0
    if gamma == 2.0:
        return -math.log1p(y)
    if gamma == 3.0:
        return -0.5 * (math.log1p(y) + y / (1.0 + y))
    return None


def _upow(k: float, a: float, b: float) -> float:
    """``int_a^b u^k du`` for ``0 < a, b``."""
    if k == -1.0:
        return math.log(b) - math.log(a)
    return (b ** (k + 1.0) - a ** (k + 1.0)) / (k + 1.0)


# |y z| above which the elementary antiderivatives (with 1/y^k prefactors) are used
_ELEMENTARY_CUTOFF = 0.05


@dataclass(frozen=True)
class AsymmetricPowerLaw(LevyJumpMeasure):
    """``lam_plus dz/z`` on (0, 1] and ``-lam_minus dz/z`` on [-1, 0)."""

    lam_plus: float
    lam_minus: float = 0.0

    def __post_init__(self):
        for name in ("lam_plus", "lam_minus"):
            val = _finite(getattr(self, name), name)
            if val < 0:
                raise InvalidMeasure(f"{name} must be >= 0, got {val}")
            object.__setattr__(self, name, val)

    @property
    def z_inf(self) -> float:
        return -1.0 if self.lam_minus > 0 else 0.0

    @property
    def z_sup(self) -> float:
        return 1.0 if self.lam_plus > 0 else 0.0

    @property
    def intensity(self) -> float:
        return self.lam_plus + self.lam_minus

    def scaled(self, factor: float) -> "AsymmetricPowerLaw":
        return AsymmetricPowerLaw(self.lam_plus * factor, self.lam_minus * factor)

    def integrate(self, f: Kernel, f_over_z: Kernel) -> float:
        total = 0.0
        if self.lam_plus > 0:
            total += self.lam_plus * _quad(f_over_z, 0.0, 1.0)
        if self.lam_minus > 0:
            total -= self.lam_minus * _quad(f_over_z, -1.0, 0.0)
        return total

    def positive_moment(self) -> float:
        return self.lam_plus

    def jump_rate(self, eps: float) -> float:
        return self.intensity * math.log(1.0 / eps)

    def sample(self, rng, size, eps):
        mag = np.exp(math.log(eps) * rng.random(size))
        if self.lam_minus == 0:
            return mag
        sign = np.where(rng.random(size) < self.lam_plus / self.intensity, 1.0, -1.0)
        return sign * mag

    def truncated_log_drift(self, y, eps):
        # int_0^eps log(1 + a z) dz / z = -Li2(-a eps) = -spence(1 + a eps)
        out = 0.0
        if self.lam_plus > 0:
            out -= self.lam_plus * float(special.spence(1.0 + y * eps))
        if self.lam_minus > 0:
            out -= self.lam_minus * float(special.spence(1.0 - y * eps))
        return out

    def _psi_closed(self, gamma, y):
        hp = _power_H(gamma, y) if self.lam_plus > 0 else 0.0
        hm = _power_H(gamma, -y) if self.lam_minus > 0 else 0.0
        if hp is None or hm is None:
            return None
        return self.lam_plus * hp + self.lam_minus * hm

    def _psi_prime_closed(self, gamma, y):
        out = 0.0
        if self.lam_plus > 0:
            out -= self.lam_plus * _power_E(gamma, y)
        if self.lam_minus > 0:
            out += self.lam_minus * _power_E(gamma, -y)
        return out

    def _psi_second_closed(self, gamma, y):
        if gamma == 2.0:
            out = 0.0
            if self.lam_plus > 0:
                out += self.lam_plus / (1.0 + y) ** 2
            if self.lam_minus > 0:
                out += self.lam_minus / (1.0 - y) ** 2
            return out
        if abs(y) < _ELEMENTARY_CUTOFF:
            return None
        # int_0^1 z (1+tz)^(-gamma-1) dz = [U(-gamma) - U(-gamma-1)] / t^2 over u in (1, 1+t)
        def side(t):
            return (_upow(-gamma, 1.0, 1.0 + t) - _upow(-gamma - 1.0, 1.0, 1.0 + t)) / (t * t)

        out = 0.0
        if self.lam_plus > 0:
            out += self.lam_plus * side(y)
        if self.lam_minus > 0:
            out += self.lam_minus * side(-y)
        return gamma * out


@dataclass(frozen=True)
class UniformDensity(LevyJumpMeasure):
    """Flat density ``lam dz`` on ``[lo, hi]``."""

    lam: float
    lo: float
    hi: float

    def __post_init__(self):
        for name in ("lam", "lo", "hi"):
            object.__setattr__(self, name, _finite(getattr(self, name), name))
        if self.lam < 0:
            raise InvalidMeasure(f"lam must be >= 0, got {self.lam}")
        if not -1.0 <= self.lo < self.hi:
            raise InvalidMeasure(f"need -1 <= lo < hi, got lo={self.lo}, hi={self.hi}")

    @property
    def z_inf(self):
        return self.lo

    @property
    def z_sup(self):
        return self.hi

    @property
    def intensity(self):
        return self.lam

    def scaled(self, factor):
        return UniformDensity(self.lam * factor, self.lo, self.hi)

    def integrate(self, f, f_over_z):
        return self.lam * _quad(f, self.lo, self.hi)

    def positive_moment(self):
        if self.hi <= 0:
            raise EmptyPositiveSupport("uniform support has no positive part")
        lo = max(self.lo, 0.0)
        return self.lam * (self.hi ** 2 - lo ** 2) / 2.0

    def jump_rate(self, eps):
        return self.lam * (self.hi - self.lo)

    def sample(self, rng, size, eps):
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def _ends(self, y):
        return 1.0 + y * self.lo, 1.0 + y * self.hi

    def _far(self, y):
        return abs(y) * max(abs(self.lo), abs(self.hi)) >= _ELEMENTARY_CUTOFF

    def _psi_closed(self, gamma, y):
        if y == 0.0:
            return 0.0
        a, b = self._ends(y)
        width = self.hi - self.lo
        if gamma == 3.0:
            return 0.5 * self.lam * width * (1.0 / (a * b) - 1.0)
        if gamma == 2.0 and self._far(y):
            return self.lam * ((math.log(b) - math.log(a)) / y - width)
        if self._far(y):
            return -self.lam / (1.0 - gamma) * (_upow(1.0 - gamma, a, b) / y - width)
        return None

    # substitution u = 1 + y z turns the moments into sums of power integrals
    def _psi_prime_closed(self, gamma, y):
        if not self._far(y):
            return None
        a, b = self._ends(y)
        return -self.lam * (_upow(1.0 - gamma, a, b) - _upow(-gamma, a, b)) / (y * y)

    def _psi_second_closed(self, gamma, y):
        if not self._far(y):
            return None
        a, b = self._ends(y)
        moment = _upow(1.0 - gamma, a, b) - 2.0 * _upow(-gamma, a, b) + _upow(-gamma - 1.0, a, b)
        return gamma * self.lam * moment / y ** 3


@dataclass(frozen=True)
class PointMass(LevyJumpMeasure):
    """All jumps have amplitude ``z``, arriving at rate ``lam``."""

    lam: float
    z: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _finite(self.lam, "lam"))
        object.__setattr__(self, "z", _finite(self.z, "z"))
        if self.lam < 0:
            raise InvalidMeasure(f"lam must be >= 0, got {self.lam}")
        if self.z < -1.0:
            raise InvalidMeasure(f"jump amplitude must be >= -1, got {self.z}")

    @property
    def z_inf(self):
        return self.z

    @property
    def z_sup(self):
        return self.z

    @property
    def intensity(self):
        return self.lam

    def scaled(self, factor):
        return PointMass(self.lam * factor, self.z)

    def integrate(self, f, f_over_z):
        return self.lam * f(self.z)

    def positive_moment(self):
        if self.z <= 0:
            raise EmptyPositiveSupport("point mass is not positive")
        return self.lam * self.z

    def jump_rate(self, eps):
        return self.lam

    def sample(self, rng, size, eps):
        return np.full(size, self.z)


@dataclass(frozen=True)
class DiscreteCompound(LevyJumpMeasure):
    """Compound Poisson jumps at rate ``lam`` with amplitude law ``sum p_i delta(z_i)``."""

    lam: float
    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "lam", _finite(self.lam, "lam"))
        if self.lam < 0:
            raise InvalidMeasure(f"lam must be >= 0, got {self.lam}")
        atoms = tuple((_finite(z, "atom z"), _finite(p, "atom p")) for z, p in self.atoms)
        if not atoms:
            raise InvalidMeasure("need at least one atom")
        if any(p <= 0 for _, p in atoms):
            raise InvalidMeasure("atom probabilities must be > 0")
        if abs(sum(p for _, p in atoms) - 1.0) > 1e-12:
            raise InvalidMeasure("atom probabilities must sum to 1")
        if any(z < -1.0 for z, _ in atoms):
            raise InvalidMeasure("jump amplitudes must be >= -1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def z_inf(self):
        return min(z for z, _ in self.atoms)

    @property
    def z_sup(self):
        return max(z for z, _ in self.atoms)

    @property
    def intensity(self):
        return self.lam

    def scaled(self, factor):
        return DiscreteCompound(self.lam * factor, self.atoms)

    def integrate(self, f, f_over_z):
        return self.lam * math.fsum(p * f(z) for z, p in self.atoms)

    def positive_moment(self):
        pos = [(z, p) for z, p in self.atoms if z > 0]
        if not pos:
            raise EmptyPositiveSupport("no positive atoms")
        return self.lam * math.fsum(p * z for z, p in pos)

    def jump_rate(self, eps):
        return self.lam

    def sample(self, rng, size, eps):
        z = np.array([a[0] for a in self.atoms])
        p = np.array([a[1] for a in self.atoms])
        return z[rng.choice(len(z), size=size, p=p)]


# ---------------------------------------------------------------------------
# solvency


def admissible_interval(measure: LevyJumpMeasure) -> tuple[float, float]:
    """Open interval of exposures ``y`` with ``1 + y z > 0`` on the support."""
    if measure.is_null():
        return -math.inf, math.inf
    lo = -1.0 / measure.z_sup if measure.z_sup > 0 else -math.inf
    hi = -1.0 / measure.z_inf if measure.z_inf < 0 else math.inf
    return lo, hi


def check_solvency(measure: LevyJumpMeasure, y: float) -> None:
    if measure.is_null():
        return
    for z in (measure.z_inf, measure.z_sup):
        if 1.0 + y * z <= 0.0:
            raise SolvencyViolation(f"1 + y*z = {1.0 + y * z:.3g} <= 0 at y={y}, z={z}")


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if gamma == 1.0:
        raise InvalidGamma("gamma = 1 is log utility; use psi_log")
    if not gamma > 0 or not math.isfinite(gamma):
        raise InvalidGamma(f"gamma must be positive and finite, got {gamma}")
    return gamma


# ---------------------------------------------------------------------------
# power utility


def psi(measure: LevyJumpMeasure, gamma: float, y: float) -> float:
    """Power-utility jump penalty at exposure ``y``."""
    gamma = _check_gamma(gamma)
    check_solvency(measure, y)
    if y == 0.0 or measure.is_null():
        return 0.0
    closed = measure._psi_closed(gamma, y)
    if closed is not None:
        return closed
    a = 1.0 - gamma

    def f(z):
        return -math.expm1(a * math.log1p(y * z)) / a

    def g(z):
        return f(z) / z if z != 0.0 else y

    return measure.integrate(f, g)


def psi_prime(measure: LevyJumpMeasure, gamma: float, y: float) -> float:
    """``d psi / dy = -int z (1 + y z)^-gamma``."""
    gamma = _check_gamma(gamma)
    check_solvency(measure, y)
    if measure.is_null():
        return 0.0
    closed = measure._psi_prime_closed(gamma, y)
    if closed is not None:
        return closed
    return measure.integrate(
        lambda z: -z * (1.0 + y * z) ** -gamma,
        lambda z: -((1.0 + y * z) ** -gamma),
    )


def psi_second(measure: LevyJumpMeasure, gamma: float, y: float) -> float:
    gamma = _check_gamma(gamma)
    check_solvency(measure, y)
    if measure.is_null():
        return 0.0
    closed = measure._psi_second_closed(gamma, y)
    if closed is not None:
        return closed
    return measure.integrate(
        lambda z: gamma * z * z * (1.0 + y * z) ** (-gamma - 1.0),
        lambda z: gamma * z * (1.0 + y * z) ** (-gamma - 1.0),
    )


def psi_log_moment(measure: LevyJumpMeasure, gamma: float, y: float) -> float:
    """``int z (1+yz)^-gamma log(1+yz)``, the gamma-derivative of ``-psi'``."""
    check_solvency(measure, y)
    if measure.is_null() or y == 0.0:
        return 0.0
    return measure.integrate(
        lambda z: z * (1.0 + y * z) ** -gamma * math.log1p(y * z),
        lambda z: (1.0 + y * z) ** -gamma * math.log1p(y * z),
    )


def mean_positive_jump(measure: LevyJumpMeasure) -> float:
    """``int_0^{z_sup} z lambda nu(dz)``."""
    return measure.positive_moment()


# ---------------------------------------------------------------------------
# log utility


def psi_log(measure: LevyJumpMeasure, y: float) -> float:
    """Log-utility penalty ``-int log(1 + y z)``."""
    check_solvency(measure, y)
    if y == 0.0 or measure.is_null():
        return 0.0
    if isinstance(measure, AsymmetricPowerLaw):
        # int_0^1 log(1+yz) dz/z = -Li2(-y)
        from scipy.special import spence

        out = 0.0
        if measure.lam_plus > 0:
            out += measure.lam_plus * -spence(1.0 + y)
        if measure.lam_minus > 0:
            out += measure.lam_minus * -spence(1.0 - y)
        return -out
    if isinstance(measure, UniformDensity) and measure._far(y):
        a, b = measure._ends(y)
        return -measure.lam * ((b * math.log(b) - b) - (a * math.log(a) - a)) / y
    return measure.integrate(lambda z: -math.log1p(y * z), lambda z: -math.log1p(y * z) / z if z else -y)


def psi_log_prime(measure: LevyJumpMeasure, y: float) -> float:
    check_solvency(measure, y)
    if measure.is_null():
        return 0.0
    if isinstance(measure, AsymmetricPowerLaw):
        out = 0.0
        if measure.lam_plus > 0:
            out -= measure.lam_plus * (math.log1p(y) / y if y else 1.0)
        if measure.lam_minus > 0:
            out += measure.lam_minus * (math.log1p(-y) / -y if y else 1.0)
        return out
    if isinstance(measure, UniformDensity) and measure._far(y):
        a, b = measure._ends(y)
        return -measure.lam * ((b - a) - math.log(b / a)) / (y * y)
    return measure.integrate(lambda z: -z / (1.0 + y * z), lambda z: -1.0 / (1.0 + y * z))


def psi_log_second(measure: LevyJumpMeasure, y: float) -> float:
    check_solvency(measure, y)
    if measure.is_null():
        return 0.0
    if isinstance(measure, AsymmetricPowerLaw) and abs(y) >= _ELEMENTARY_CUTOFF:
        def side(t):
            return (math.log1p(t) + 1.0 / (1.0 + t) - 1.0) / (t * t)

        return measure.lam_plus * side(y) * (measure.lam_plus > 0) + measure.lam_minus * (
            side(-y) if measure.lam_minus > 0 else 0.0
        )
    if isinstance(measure, UniformDensity) and measure._far(y):
        a, b = measure._ends(y)
        return measure.lam * ((b - a) - 2.0 * math.log(b / a) - (1.0 / b - 1.0 / a)) / y ** 3
    return measure.integrate(lambda z: (z / (1.0 + y * z)) ** 2, lambda z: z / (1.0 + y * z) ** 2)


# ---------------------------------------------------------------------------
# exponential utility


def psi_exponential(measure: LevyJumpMeasure, rq: float, y: float) -> float:
    """CARA penalty ``int [exp(-rq y z) - 1]`` for a dollar exposure ``y``."""
    if not rq > 0:
        raise InvalidMeasure(f"rq must be > 0, got {rq}")
    if y == 0.0 or measure.is_null():
        return 0.0
    x = rq * y
    return measure.integrate(lambda z: math.expm1(-x * z), lambda z: math.expm1(-x * z) / z if z else -x)


def psi_exponential_prime(measure: LevyJumpMeasure, rq: float, y: float) -> float:
    if measure.is_null():
        return 0.0
    x = rq * y
    return -rq * measure.integrate(lambda z: z * math.exp(-x * z), lambda z: math.exp(-x * z))


def psi_exponential_second(measure: LevyJumpMeasure, rq: float, y: float) -> float:
    if measure.is_null():
        return 0.0
    x = rq * y
    return rq * rq * measure.integrate(lambda z: z * z * math.exp(-x * z), lambda z: z * math.exp(-x * z))
