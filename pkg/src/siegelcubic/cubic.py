"""The marked cubic family f(z) = lam*z + a*z^2 + z^3 and its potentials.

Provides critical points, forward orbits at extended precision, the escape
potential G (rate of log-growth toward infinity, normalized by the degree),
and the Lyapunov exponent of the measure of maximal entropy via
L = log 3 + G(c+) + G(c-).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

import gmpy2
from gmpy2 import mpfr

from .numerics import XComplex, RangeError, _to_mpc

__all__ = [
    "CubicMap",
    "OrbitRecord",
    "GreenResult",
    "LyapunovResult",
    "critical_points",
    "iterate",
    "green",
    "lyapunov",
    "GREEN_BUDGET",
]

# Default iteration budget before an orbit is declared bounded-within-budget.
GREEN_BUDGET = 10_000


@dataclass(frozen=True)
class CubicMap:
    """z -> lam*z + a*z^2 + z^3 with the marked fixed point at 0."""

    lam: XComplex
    a: XComplex

    def __post_init__(self):
        object.__setattr__(self, "lam", XComplex(self.lam))
        object.__setattr__(self, "a", XComplex(self.a))

    def __call__(self, z):
        zz = _to_mpc(z)
        return XComplex._wrap((self.lam._z + (self.a._z + zz) * zz) * zz)

    def escape_radius(self) -> float:
        """Beyond R = 2(1+|a|+|lam|) the modulus at least squares halves: |f(z)| >= |z|^2/2."""
        return 2.0 * (1.0 + float(abs(self.a._z)) + float(abs(self.lam._z)))


@dataclass(frozen=True)
class OrbitRecord:
    samples: tuple
    escaped_at: Optional[int]
    escape_radius: float


def critical_points(f: CubicMap) -> tuple[XComplex, XComplex]:
    """The two roots of f'(z) = 3z^2 + 2az + lam, ordered lexicographically by (re, im).

    3(z - c1)(z - c2) reproduces the derivative: c1*c2 = lam/3, c1 + c2 = -2a/3.
    """
    a = f.a._z
    lam = f.lam._z
    disc = gmpy2.sqrt(a * a - 3 * lam)
    # pick the root of larger magnitude first to avoid cancellation
    u = -a - disc
    v = -a + disc
    if abs(v) > abs(u):
        u = v
    c1 = u / 3
    c2 = (lam / 3) / c1 if c1 != 0 else gmpy2.mpc(0)
    key = lambda c: (c.real, c.imag)
    lo, hi = sorted((c1, c2), key=key)
    return XComplex._wrap(lo), XComplex._wrap(hi)


def iterate(f: CubicMap, z0, n: int, escape_radius: Optional[float] = None) -> OrbitRecord:
    """Forward orbit z0, f(z0), ..., stopping early once |z| exceeds the escape radius."""
    if n < 0:
        raise ValueError("n must be >= 0")
    R = f.escape_radius() if escape_radius is None else escape_radius
    lam, a = f.lam._z, f.a._z
    z = _to_mpc(z0)
    samples = [XComplex._wrap(z)]
    escaped_at = 0 if abs(z) > R else None
    for _ in range(n):
        if escaped_at is not None:
            break
        z = (lam + (a + z) * z) * z
        samples.append(XComplex._wrap(z))
        if abs(z) > R:
            escaped_at = len(samples) - 1
    return OrbitRecord(tuple(samples), escaped_at, R)


@dataclass(frozen=True)
class GreenResult:
    value: float
    verdict: str               # "escaped" | "bounded"
    iterations: int
    used_extended: bool = False

    @property
    def undecided(self) -> bool:
        """Bounded-within-budget: the orbit never reached the escape radius."""
        return self.verdict == "bounded"


def _green_extended(f: CubicMap, z0, tol: float, budget: int) -> GreenResult:
    lam, a = f.lam._z, f.a._z
    R = f.escape_radius()
    z = _to_mpc(z0)
    n = 0
    while abs(z) <= R:
        if n >= budget:
            return GreenResult(0.0, "bounded", n, True)
        z = (lam + (a + z) * z) * z
        n += 1
    g = float(gmpy2.log(abs(z))) / (3.0 ** n)
    scale = 1.0 / (3.0 ** n)
    while True:
        # remaining corrections are bounded by (scale/2) * log(1 + eps_feed)
        m = abs(z)
        bound = scale * (float(abs(a)) + 1.0) / float(m)
        if bound <= tol or bound == 0.0:
            return GreenResult(g, "escaped", n, True)
        z_next = (lam + (a + z) * z) * z
        scale /= 3.0
        g += scale * float(gmpy2.log(abs(z_next / (z * z * z))))
        z = z_next
        n += 1


def green(f: CubicMap, z, tol: float = 1e-9, budget: int = GREEN_BUDGET) -> GreenResult:
    """Escape potential G(z) = lim 3^-n log|f^n(z)| with absolute error <= tol.

    Once the orbit passes R = 2(1+|a|+|lam|) the telescoping refinement
    G = 3^-N log|z_N| + sum_j 3^-(j+1) log|z_{j+1}/z_j^3| converges
    geometrically.  Orbits still inside R after `budget` steps return value
    0.0 with verdict "bounded" -- a bounded-within-budget signal that callers
    must not conflate with a certified interior point.

    Runs in hardware floats while magnitudes stay representable and falls
    back to extended precision otherwise (recorded in .used_extended).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    try:
        lam, a = complex(f.lam), complex(f.a)
        zc = complex(XComplex(z))
    except OverflowError:
        return _green_extended(f, z, tol, budget)
    R = f.escape_radius()
    n = 0
    while abs(zc) <= R:
        if n >= budget:
            return GreenResult(0.0, "bounded", n)
        zc = (lam + (a + zc) * zc) * zc
        n += 1
        if not (math.isfinite(zc.real) and math.isfinite(zc.imag)):
            return _green_extended(f, z, tol, budget)
    g = math.log(abs(zc)) / (3.0 ** n)
    scale = 1.0 / (3.0 ** n)
    while True:
        m = abs(zc)
        bound = scale * (abs(a) + 1.0) / m
        if bound <= tol or bound == 0.0:
            return GreenResult(g, "escaped", n)
        if m > 1e100:
            # one more cube would overflow; the bound above is already tiny
            return GreenResult(g, "escaped", n)
        z_next = (lam + (a + zc) * zc) * zc
        scale /= 3.0
        g += scale * math.log(abs(z_next / (zc * zc * zc)))
        zc = z_next
        n += 1


@dataclass(frozen=True)
class LyapunovResult:
    value: float
    undecided: bool
    critical: tuple = field(default=())


def lyapunov(f: CubicMap, tol: float = 1e-9, budget: int = GREEN_BUDGET) -> LyapunovResult:
    """L(f) = log 3 + G(c+) + G(c-), within 2*tol.

    Equals log 3 exactly when both critical orbits stay bounded within the
    budget; `undecided` is set whenever either orbit was only
    bounded-within-budget rather than certified escaping.
    """
    c1, c2 = critical_points(f)
    g1 = green(f, c1, tol, budget)
    g2 = green(f, c2, tol, budget)
    value = math.log(3.0) + g1.value + g2.value
    return LyapunovResult(value, g1.undecided or g2.undecided, (g1, g2))
