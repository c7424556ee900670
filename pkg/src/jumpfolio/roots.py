"""Scalar root finding: closed-form cubic/quadratic roots and a bracketed Newton."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import NonCoercive, NonConvergence


def quadratic_roots(a: float, b: float, c: float) -> tuple[float, float]:
    """Real roots of ``a x^2 + b x + c``, ascending, without cancellation."""
    if a == 0.0:
        if b == 0.0:
            raise ValueError("degenerate quadratic")
        x = -c / b
        return x, x
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        if disc > -1e-14 * (b * b + abs(4.0 * a * c)):
            disc = 0.0
        else:
            raise ValueError("complex roots")
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1 = q / a
    r2 = c / q if q != 0.0 else r1
    return (r1, r2) if r1 <= r2 else (r2, r1)


def _polish_monic(x: float, a: float, b: float, c: float, steps: int = 2) -> float:
    for _ in range(steps):
        f = ((x + a) * x + b) * x + c
        df = (3.0 * x + 2.0 * a) * x + b
        if df == 0.0 or f == 0.0:
            break
        x_new = x - f / df
        if abs(((x_new + a) * x_new + b) * x_new + c) >= abs(f):
            break
        x = x_new
    return x


def cubic_real_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of the monic cubic ``x^3 + a x^2 + b x + c``, ascending.

    Three real roots come from the trigonometric form of the depressed cubic;
    a single real root from Cardano's formula.  Each root gets a Newton polish.
    """
    shift = a / 3.0
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    s = math.sqrt(-p / 3.0) if p < 0.0 else 0.0
    if p == 0.0 or (p < 0.0 and s ** 3 == 0.0):
        roots = [float(-np.cbrt(q)) - shift]
    elif p < 0.0 and disc <= 0.0:
        arg = max(-1.0, min(1.0, -q / (2.0 * s ** 3)))
        theta = math.acos(arg) / 3.0
        roots = [2.0 * s * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift for k in range(3)]
    else:
        # the larger cube root first, the other from u v = -p/3 to avoid cancellation
        sq = math.sqrt(disc)
        t = float(np.cbrt(-q / 2.0 - math.copysign(sq, q)))
        roots = [t - p / (3.0 * t) - shift if t != 0.0 else -shift]
    return sorted(_polish_monic(r, a, b, c) for r in roots)


def _gamma2_foc(y: float, A: float, B: float, lp: float, lm: float) -> float:
    out = y - A
    if lp > 0:
        out -= B * lp / (1.0 + y)
    if lm > 0:
        out += B * lm / (1.0 - y)
    return out


def _gamma2_checked(y: float, A: float, B: float, lp: float, lm: float) -> float:
    """Return ``y`` if it brackets the root of the increasing FOC, else bisect."""
    lo = math.nextafter(-1.0, 0.0) if lp > 0 else min(-1.0, A - B * lm - 1.0)
    hi = math.nextafter(1.0, 0.0) if lm > 0 else max(1.0, A + B * lp + 1.0)
    if lo <= y <= hi:
        d = 1e-9 * max(1.0, abs(y))
        left, right = max(lo, y - d), min(hi, y + d)
        if _gamma2_foc(left, A, B, lp, lm) <= 0.0 <= _gamma2_foc(right, A, B, lp, lm):
            return y
    return bisect_increasing(lambda t: _gamma2_foc(t, A, B, lp, lm), lo, hi)


def exposure_root_gamma2_powerlaw(A: float, B: float, lam_plus: float, lam_minus: float) -> tuple[float, str]:
    """Root of ``-A + y + B(-lam_plus/(1+y) + lam_minus/(1-y)) = 0`` on the solvency set.

    With both intensities positive the equation clears to a cubic with exactly
    one root in (-1, 1), the middle one.  With one side absent a spurious root
    at the missing wall factors out and the remainder is a quadratic.  Roots
    that rounding pushes onto a wall are recovered by bisection.

    Returns the root and the branch label.
    """
    if lam_plus > 0 and lam_minus > 0:
        lam_sum, lam_diff = lam_plus + lam_minus, lam_minus - lam_plus
        roots = cubic_real_roots(-A, -(1.0 + B * lam_sum), A - B * lam_diff)
        inside = [r for r in roots if -1.0 < r < 1.0]
        y = inside[0] if len(inside) == 1 else roots[len(roots) // 2]
        y = _polish_cubic(y, A, B, lam_plus, lam_minus)
        return _gamma2_checked(y, A, B, lam_plus, lam_minus), "cubic-trigonometric"
    if lam_plus > 0:
        # (y - A)(1 + y) - B lam_plus = 0, root above -1
        _, y = quadratic_roots(1.0, 1.0 - A, -(A + B * lam_plus))
        return _gamma2_checked(y, A, B, lam_plus, 0.0), "cubic-trigonometric (reduced)"
    if lam_minus > 0:
        # (y - A)(1 - y) + B lam_minus = 0, root below 1
        y, _ = quadratic_roots(1.0, -(1.0 + A), A - B * lam_minus)
        return _gamma2_checked(y, A, B, 0.0, lam_minus), "cubic-trigonometric (reduced)"
    return A, "closed-form quadratic"


def _polish_cubic(y, A, B, lp, lm, steps=2):
    # Newton on the cleared polynomial; recovers digits the arccos loses near double roots
    for _ in range(steps):
        p = (y - A) * (1.0 - y * y) + B * (-lp * (1.0 - y) + lm * (1.0 + y))
        dp = (1.0 - y * y) - 2.0 * y * (y - A) + B * (lp + lm)
        if dp == 0.0:
            break
        y_new = y - p / dp
        if not -1.0 < y_new < 1.0:
            break
        y = y_new
    return y


def bisect_increasing(f: Callable[[float], float], lo: float, hi: float, xtol: float = 0.0, maxiter: int = 400) -> float:
    """Plain bisection for an increasing ``f`` with ``f(lo) < 0 < f(hi)``."""
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            return mid
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def safeguarded_newton(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    x0: float,
    tol: float = 1e-12,
    maxiter: int = 200,
) -> tuple[float, str]:
    """Root of a strictly increasing ``f`` on the open interval ``(lo, hi)``.

    Infinite ends are allowed; the bracket is grown from ``x0`` until ``f``
    changes sign.  Finite ends are pulled inside by a relative 1e-12.  When no
    sign change exists before a finite end, that end (shrunk) is returned with
    status ``"boundary-low"``/``"boundary-high"``; otherwise status is ``"root"``.
    """
    delta = 1e-12
    a = lo + delta * max(1.0, abs(lo)) if math.isfinite(lo) else -math.inf
    b = hi - delta * max(1.0, abs(hi)) if math.isfinite(hi) else math.inf
    x = min(max(x0, a), b) if math.isfinite(x0) else 0.5 * (a + b)
    if not math.isfinite(x):
        x = 0.0

    fx = f(x)
    if fx == 0.0:
        return x, "root"
    if fx > 0.0:
        b, fb = x, fx
        if math.isfinite(a):
            fa = f(a)
            if fa >= 0.0:
                return a, "boundary-low"
        else:
            step = max(1.0, abs(x))
            for _ in range(200):
                cand = x - step
                fc = f(cand)
                if fc < 0.0:
                    a, fa = cand, fc
                    break
                b, fb = cand, fc
                step *= 2.0
            else:
                raise NonCoercive("first-order condition never turns negative")
    else:
        a, fa = x, fx
        if math.isfinite(b):
            fb = f(b)
            if fb <= 0.0:
                return b, "boundary-high"
        else:
            step = max(1.0, abs(x))
            for _ in range(200):
                cand = x + step
                fc = f(cand)
                if fc > 0.0:
                    b, fb = cand, fc
                    break
                a, fa = cand, fc
                step *= 2.0
            else:
                raise NonCoercive("first-order condition never turns positive")

    # a < root < b with f(a) < 0 < f(b)
    x = x if a < x < b else 0.5 * (a + b)
    fx = f(x)
    for _ in range(maxiter):
        if abs(fx) <= tol:
            return x, "root"
        if fx < 0.0:
            a = x
        else:
            b = x
        d = fprime(x)
        x_new = x - fx / d if d > 0 else math.nan
        if not (a < x_new < b) or abs(x_new - x) > 0.5 * (b - a):
            x_new = 0.5 * (a + b)
        if x_new == x or b - a <= 2.0 * math.ulp(max(abs(a), abs(b))):
            return x, "root"
        x = x_new
        fx = f(x)
    raise NonConvergence(f"bracketed Newton did not converge in {maxiter} iterations (|f|={abs(fx):.3g})")
