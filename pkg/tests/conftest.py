from __future__ import annotations

import numpy as np
import pytest

from jumpfolio import (
    AsymmetricPowerLaw,
    DiscreteCompound,
    JumpfolioError,
    MultiSectorMarket,
    OneSectorMarket,
    PointMass,
    UniformDensity,
)

ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def block_orthogonal(rng: np.random.Generator, m: int, k: int, scale: float = 0.03) -> np.ndarray:
    x = rng.normal(0.0, scale, (m, k))
    if k > 1:
        x -= x.mean(axis=1, keepdims=True)
    else:
        x[:] = 0.0
    return x.ravel()


def random_measure(rng: np.random.Generator, kind: str | None = None):
    kind = kind or rng.choice(["power_law", "uniform", "point_mass", "discrete"])
    if kind == "power_law":
        lp = rng.uniform(0.05, 1.5)
        lm = rng.uniform(0.0, 1.0) if rng.random() < 0.5 else 0.0
        return AsymmetricPowerLaw(lp, lm)
    if kind == "uniform":
        lo = rng.uniform(-0.9, 0.2)
        return UniformDensity(rng.uniform(0.05, 1.5), lo, lo + rng.uniform(0.1, 0.9))
    if kind == "point_mass":
        return PointMass(rng.uniform(0.05, 1.5), rng.choice([-1, 1]) * rng.uniform(0.1, 0.9))
    zs = rng.uniform(-0.8, 0.8, size=int(rng.integers(2, 5)))
    ps = rng.dirichlet(np.ones(zs.size))
    return DiscreteCompound(rng.uniform(0.05, 1.5), tuple(zip(zs.tolist(), ps.tolist())))


def random_one_sector(rng: np.random.Generator, n: int, measure=None, rperp: bool = True) -> OneSectorMarket:
    v = rng.uniform(0.1, 0.4)
    rho = rng.uniform(max(-0.9 / (n - 1), -0.3), 0.8)
    return OneSectorMarket(
        n,
        v,
        rho,
        rng.uniform(-0.02, 0.12),
        rng.uniform(-0.8, 0.6),
        measure if measure is not None else random_measure(rng),
        r=rng.uniform(0.0, 0.05),
        r_perp=block_orthogonal(rng, 1, n) if rperp else None,
    )


def random_multi_sector(rng: np.random.Generator, m: int, k: int, sources: int | None = None) -> MultiSectorMarket:
    L = sources or int(rng.integers(1, m + 1))
    for _ in range(100):
        rho_intra = rng.uniform(0.1, 0.8, m)
        cross = rng.uniform(-0.05, 0.1, (m, m))
        cross = (cross + cross.T) / 2
        cross = np.minimum(cross, rho_intra.min() - 0.05)
        try:
            return MultiSectorMarket(
                m,
                k,
                rng.uniform(0.1, 0.4, m),
                rho_intra,
                cross,
                rng.uniform(-0.02, 0.12, m),
                rng.uniform(-0.5, 0.4, (m, L)),
                tuple(random_measure(rng) for _ in range(L)),
                r=rng.uniform(0.0, 0.05),
                r_perp=block_orthogonal(rng, m, k),
            )
        except JumpfolioError:
            continue
    raise RuntimeError("could not draw a valid multisector market")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20261014)
