"""Market descriptions and the orthogonal decomposition of return space.

Return space splits as ``Vbar (+) Vperp`` where ``Vbar`` is spanned by the
sector indicator vectors ``1_l`` (coordinates ``k(l-1)+1 .. kl``) and carries
all jump risk.  With block-equicorrelated covariance both subspaces are
invariant under ``Sigma``, and the eigen-data are available in closed form:

* one sector: ``kappa1 = v^2 (1 + (n-1) rho)`` on ``1`` and ``kappa2 = v^2 (1 - rho)`` on ``Vperp``
* m sectors: the m x m matrix ``K`` with ``K_ll = v_l^2 (1 + (k-1) rho_ll)`` and
  ``K_ls = k v_l v_s rho_ls``, and ``v_l^2 (1 - rho_ll)`` on each sector's ``Vperp`` block.

Large-n work never needs the dense ``Sigma``; quadratic forms and products use
the block structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import AssumptionViolated, DegenerateCorrelation, InvalidMeasure, NotPositiveDefinite, ShapeMismatch
from .levy import LevyJumpMeasure

ORTHOGONALITY_TOL = 1e-10


class InvalidMarket(ShapeMismatch):
    pass


def _vec(x, n: int | None, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or (n is not None and arr.shape[0] != n):
        raise ShapeMismatch(f"{name} must have length {n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMarket(f"{name} must be finite")
    return arr


def _check_block_orthogonal(r_perp: np.ndarray, m: int, k: int, name: str = "r_perp") -> None:
    sums = r_perp.reshape(m, k).sum(axis=1)
    scale = max(1.0, float(np.abs(r_perp).max(initial=0.0))) * k
    if np.any(np.abs(sums) > 1e-10 * scale):
        raise InvalidMarket(f"each sector block of {name} must sum to 0, got block sums {sums}")


@dataclass(frozen=True, eq=False)
class MultiSectorMarket:
    """m sectors of k assets each, block-equicorrelated diffusion, sector jumps.

    ``j[s, l]`` is the response of sector ``s`` to jump source ``l``; jump source
    ``l`` has measure ``measures[l]``.
    """

    m: int
    k: int
    v: np.ndarray
    rho_intra: np.ndarray
    rho_cross: np.ndarray
    r_sector: np.ndarray
    j: np.ndarray
    measures: tuple[LevyJumpMeasure, ...]
    r: float = 0.0
    r_perp: np.ndarray | None = None

    def __post_init__(self):
        m, k = int(self.m), int(self.k)
        if m < 1 or k < 1:
            raise ShapeMismatch(f"need m >= 1 and k >= 1, got m={m}, k={k}")
        n = m * k
        set_ = lambda name, val: object.__setattr__(self, name, val)  # noqa: E731
        set_("m", m)
        set_("k", k)
        v = _vec(self.v, m, "v")
        if np.any(v <= 0):
            raise InvalidMarket("volatilities must be > 0")
        set_("v", v)
        set_("rho_intra", _vec(self.rho_intra, m, "rho_intra"))
        cross = np.asarray(self.rho_cross, dtype=float)
        if cross.ndim == 0:
            cross = np.full((m, m), float(cross))
        if cross.shape != (m, m):
            raise ShapeMismatch(f"rho_cross must be {m}x{m}, got {cross.shape}")
        cross = cross.copy()
        np.fill_diagonal(cross, self.rho_intra)
        if not np.allclose(cross, cross.T, atol=0.0, rtol=0.0):
            raise InvalidMarket("rho_cross must be symmetric")
        set_("rho_cross", cross)
        set_("r_sector", _vec(self.r_sector, m, "r_sector"))
        jj = np.asarray(self.j, dtype=float)
        if jj.ndim == 1:
            jj = jj.reshape(m, -1)
        if jj.ndim != 2 or jj.shape[0] != m:
            raise ShapeMismatch(f"j must have {m} rows, got shape {jj.shape}")
        set_("j", jj)
        measures = tuple(self.measures)
        if len(measures) != jj.shape[1]:
            raise ShapeMismatch(f"need one measure per jump source ({jj.shape[1]}), got {len(measures)}")
        if not all(isinstance(mu, LevyJumpMeasure) for mu in measures):
            raise InvalidMeasure("measures must be LevyJumpMeasure instances")
        set_("measures", measures)
        set_("r", float(self.r))
        rp = np.zeros(n) if self.r_perp is None else _vec(self.r_perp, n, "r_perp")
        _check_block_orthogonal(rp, m, k)
        set_("r_perp", rp)
        self._validate_correlations()

    def _validate_correlations(self):
        m, k, n = self.m, self.k, self.n
        rho = self.rho_intra
        if k > 1:
            if np.any(rho == 1.0):
                raise DegenerateCorrelation("rho_intra = 1 leaves no diversifiable risk in the sector")
            if np.any(rho > 1.0) or np.any(rho < -1.0 / (k - 1)):
                raise NotPositiveDefinite(f"need -1/(k-1) <= rho_intra < 1, got {rho}")
        for l in range(m):
            for s in range(m):
                if l == s:
                    continue
                rls = self.rho_cross[l, s]
                if not (rls < rho[l] or k == 1) or rls < -1.0 / (n - 1):
                    raise NotPositiveDefinite(
                        f"need rho_intra[{l}] > rho_cross[{l},{s}] >= -1/(n-1), got {rho[l]}, {rls}"
                    )
        try:
            np.linalg.cholesky(self.kappa_matrix)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("sector matrix K is not positive definite") from None

    # -- shape -----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.m * self.k

    @property
    def n_sources(self) -> int:
        return self.j.shape[1]

    def sector_indicator(self, l: int) -> np.ndarray:
        e = np.zeros(self.n)
        e[l * self.k : (l + 1) * self.k] = 1.0
        return e

    # -- covariance ------------------------------------------------------
    @cached_property
    def factor_matrix(self) -> np.ndarray:
        """``C_ls = v_l v_s rho_ls`` (diagonal ``v_l^2 rho_ll``): the common-factor part."""
        return np.outer(self.v, self.v) * self.rho_cross

    @cached_property
    def idiosyncratic(self) -> np.ndarray:
        """Per-sector eigenvalue ``v_l^2 (1 - rho_ll)`` on the sector's ``Vperp`` block."""
        return self.v ** 2 * (1.0 - self.rho_intra)

    @cached_property
    def kappa_matrix(self) -> np.ndarray:
        K = self.k * self.factor_matrix
        np.fill_diagonal(K, self.v ** 2 * (1.0 + (self.k - 1) * self.rho_intra))
        return K

    def bar_curvature(self, asymptotic: bool = False) -> np.ndarray:
        """Quadratic-form matrix of the ``Vbar`` objective in scaled weights ``varpi = k*omega_bar``."""
        return self.factor_matrix.copy() if asymptotic else self.kappa_matrix / self.k

    def sigma(self) -> np.ndarray:
        return build_sigma(self)

    def quad_form(self, w: np.ndarray) -> float:
        blocks = np.asarray(w, dtype=float).reshape(self.m, self.k)
        sums = blocks.sum(axis=1)
        return float(self.idiosyncratic @ (blocks ** 2).sum(axis=1) + sums @ self.factor_matrix @ sums)

    def matvec(self, w: np.ndarray) -> np.ndarray:
        blocks = np.asarray(w, dtype=float).reshape(self.m, self.k)
        common = self.factor_matrix @ blocks.sum(axis=1)
        return (self.idiosyncratic[:, None] * blocks + common[:, None]).ravel()

    # -- returns / jumps ---------------------------------------------------
    def excess_returns(self) -> np.ndarray:
        return np.repeat(self.r_sector, self.k) + self.r_perp

    def jump_vectors(self) -> np.ndarray:
        return jump_vectors(self)

    def with_k(self, k: int) -> "MultiSectorMarket":
        """Same sector parameters with ``k`` assets per sector (``r_perp`` reset to 0)."""
        return MultiSectorMarket(
            self.m, k, self.v, self.rho_intra, self.rho_cross, self.r_sector, self.j, self.measures, self.r
        )


@dataclass(frozen=True, eq=False)
class OneSectorMarket:
    """n assets with common volatility, common correlation and one common jump loading."""

    n: int
    v: float
    rho: float
    rbar: float
    jbar: float
    measure: LevyJumpMeasure
    r: float = 0.0
    r_perp: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise ShapeMismatch(f"need n >= 2, got {n}")
        object.__setattr__(self, "n", n)
        for name in ("v", "rho", "rbar", "jbar", "r"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise InvalidMarket(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.v <= 0:
            raise InvalidMarket(f"v must be > 0, got {self.v}")
        if self.rho == 1.0:
            raise DegenerateCorrelation("rho = 1 leaves no diversifiable risk")
        if not -1.0 / (n - 1) < self.rho < 1.0:
            raise NotPositiveDefinite(f"need -1/(n-1) < rho < 1, got rho={self.rho} with n={n}")
        if not -1.0 < self.jbar < 1.0:
            raise InvalidMarket(f"need -1 < jbar < 1, got {self.jbar}")
        if not isinstance(self.measure, LevyJumpMeasure):
            raise InvalidMeasure("measure must be a LevyJumpMeasure")
        rp = np.zeros(n) if self.r_perp is None else _vec(self.r_perp, n, "r_perp")
        _check_block_orthogonal(rp, 1, n)
        object.__setattr__(self, "r_perp", rp)

    m = 1

    @property
    def k(self) -> int:
        return self.n

    @property
    def kappa1(self) -> float:
        return self.v ** 2 * (1.0 + (self.n - 1) * self.rho)

    @property
    def kappa2(self) -> float:
        return self.v ** 2 * (1.0 - self.rho)

    @property
    def measures(self) -> tuple[LevyJumpMeasure, ...]:
        return (self.measure,)

    @cached_property
    def multisector(self) -> MultiSectorMarket:
        return MultiSectorMarket(
            m=1,
            k=self.n,
            v=[self.v],
            rho_intra=[self.rho],
            rho_cross=[[self.rho]],
            r_sector=[self.rbar],
            j=[[self.jbar]],
            measures=(self.measure,),
            r=self.r,
            r_perp=self.r_perp,
        )

    def bar_curvature(self, asymptotic: bool = False) -> float:
        return self.v ** 2 * self.rho if asymptotic else self.kappa1 / self.n

    def sigma(self) -> np.ndarray:
        return build_sigma(self)

    def quad_form(self, w):
        return self.multisector.quad_form(w)

    def matvec(self, w):
        return self.multisector.matvec(w)

    def excess_returns(self) -> np.ndarray:
        return self.rbar + self.r_perp

    def jump_vectors(self) -> np.ndarray:
        return np.full((self.n, 1), self.jbar)

    def with_n(self, n: int, r_perp=None) -> "OneSectorMarket":
        return OneSectorMarket(n, self.v, self.rho, self.rbar, self.jbar, self.measure, self.r, r_perp)


@dataclass(frozen=True, eq=False)
class RawMarket:
    """Arbitrary covariance, excess returns and jump loadings (columns of ``jumps``)."""

    sigma_matrix: np.ndarray
    R: np.ndarray
    jumps: np.ndarray
    measures: tuple[LevyJumpMeasure, ...]
    r: float = 0.0

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.sigma_matrix, dtype=float))
        n = S.shape[0]
        if S.shape != (n, n):
            raise ShapeMismatch(f"sigma must be square, got {S.shape}")
        if not np.allclose(S, S.T, rtol=0, atol=1e-14 * max(1.0, np.abs(S).max())):
            raise NotPositiveDefinite("sigma must be symmetric")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("sigma is not positive definite") from None
        object.__setattr__(self, "sigma_matrix", S)
        object.__setattr__(self, "R", _vec(self.R, n, "R"))
        J = np.asarray(self.jumps, dtype=float)
        if J.ndim == 1:
            J = J.reshape(n, 1)
        if J.shape[0] != n:
            raise ShapeMismatch(f"jump loadings must have {n} rows, got {J.shape}")
        object.__setattr__(self, "jumps", J)
        if len(self.measures) != J.shape[1]:
            raise ShapeMismatch("need one measure per jump column")
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "r", float(self.r))

    @property
    def n(self) -> int:
        return self.sigma_matrix.shape[0]

    def sigma(self) -> np.ndarray:
        return self.sigma_matrix

    def quad_form(self, w):
        w = np.asarray(w, dtype=float)
        return float(w @ self.sigma_matrix @ w)

    def matvec(self, w):
        return self.sigma_matrix @ np.asarray(w, dtype=float)

    def excess_returns(self):
        return self.R

    def jump_vectors(self):
        return self.jumps


Market = OneSectorMarket | MultiSectorMarket | RawMarket


def _as_multi(market) -> MultiSectorMarket:
    if isinstance(market, OneSectorMarket):
        return market.multisector
    if isinstance(market, MultiSectorMarket):
        return market
    raise TypeError(f"structured market required, got {type(market).__name__}")


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SigmaDecomposition:
    """``sigma = sigma_bar + sigma_perp`` with closed-form eigen-data.

    ``kappa`` is ``(kappa1, kappa2)`` for one sector and the m x m matrix ``K`` otherwise.
    """

    sigma: np.ndarray
    sigma_bar: np.ndarray
    sigma_perp: np.ndarray
    kappa: tuple[float, float] | np.ndarray


def build_sigma(market) -> np.ndarray:
    """Dense covariance matrix of a structured market."""
    mk = _as_multi(market)
    S = np.kron(mk.factor_matrix, np.ones((mk.k, mk.k)))
    S[np.diag_indices_from(S)] = np.repeat(mk.v ** 2, mk.k)
    return S


def decompose_sigma(market) -> SigmaDecomposition:
    mk = _as_multi(market)
    k = mk.k
    ones = np.ones((k, k))
    sigma_bar = np.kron(mk.kappa_matrix / k, ones)
    centering = np.eye(k) - ones / k
    sigma_perp = np.kron(np.diag(mk.idiosyncratic), centering)
    if isinstance(market, OneSectorMarket):
        kappa = (market.kappa1, market.kappa2)
    else:
        kappa = mk.kappa_matrix.copy()
    return SigmaDecomposition(build_sigma(mk), sigma_bar, sigma_perp, kappa)


def decompose_returns(R: Sequence[float], m: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Project ``R`` onto the sector indicators: block means and the block-centred rest."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 1 or m < 1 or R.shape[0] % m:
        raise ShapeMismatch(f"length {R.shape} is not divisible into {m} sectors")
    blocks = R.reshape(m, -1)
    r_sector = blocks.mean(axis=1)
    r_perp = (blocks - r_sector[:, None]).ravel()
    return r_sector, r_perp


def jump_vectors(market) -> np.ndarray:
    """n x L matrix whose column ``l`` is ``J_l = sum_s j[s, l] 1_s``."""
    if isinstance(market, RawMarket):
        return market.jumps
    mk = _as_multi(market)
    return np.repeat(mk.j, mk.k, axis=0)


def invariance_residual(sigma: np.ndarray, m: int) -> float:
    """Size of the part of ``sigma @ span{1_l}`` that leaks into ``Vperp``."""
    n = sigma.shape[0]
    if n % m:
        raise ShapeMismatch(f"{n} assets do not split into {m} sectors")
    k = n // m
    basis = np.kron(np.eye(m), np.ones((k, 1))) / math.sqrt(k)
    image = sigma @ basis
    leak = image - basis @ (basis.T @ image)
    return float(np.abs(leak).max())


def check_orthogonal_decomposition(sigma: np.ndarray, m: int, tol: float = ORTHOGONALITY_TOL) -> float:
    """Raise :class:`AssumptionViolated` unless ``sigma`` maps ``span{1_l}`` into itself."""
    res = invariance_residual(np.asarray(sigma, dtype=float), m)
    if res > tol * max(1.0, float(np.abs(sigma).max())):
        raise AssumptionViolated(f"sigma does not leave span{{1_l}} invariant (residual {res:.3g})")
    return res
