"""Continued fractions: convergents, Brjuno-type sums, and noble truncations.

A rotation number is given by its continued-fraction entries
``[a0; a1, a2, ...]``.  The expansion is either finite (a rational) or ends
in an infinite all-ones tail (a quadratic irrational of bounded type); the
all-ones tail is written ``...`` in string literals, e.g. ``"[0;1,1,1,...]"``
for the golden rotation number.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import gmpy2
from gmpy2 import mpfr

from .numerics import XComplex, get_precision

__all__ = [
    "CFExpansion",
    "Convergent",
    "parse_cf",
    "convergents",
    "cf_value",
    "brjuno_sum",
    "noble_truncate",
    "is_bounded_type",
    "unit_multiplier",
    "GOLDEN",
]

ALL_ONES = "all-ones"


@dataclass(frozen=True)
class CFExpansion:
    """Continued fraction [a0; a1, a2, ...] with an optional all-ones tail."""

    a0: int
    partials: tuple
    tail: Optional[str] = None  # None (finite) or ALL_ONES

    def __post_init__(self):
        if any(a < 1 for a in self.partials):
            raise ValueError("partial quotients must be >= 1")
        if self.tail not in (None, ALL_ONES):
            raise ValueError(f"unsupported tail {self.tail!r}")

    def partial(self, i: int) -> int:
        """a_i for i >= 1, expanding the tail on demand."""
        if i < 1:
            raise IndexError("partial quotients start at index 1")
        if i <= len(self.partials):
            return self.partials[i - 1]
        if self.tail == ALL_ONES:
            return 1
        raise IndexError(f"finite expansion has only {len(self.partials)} partial quotients")

    @property
    def is_rational(self) -> bool:
        return self.tail is None

    def __str__(self):
        parts = ",".join(str(a) for a in self.partials)
        dots = ",..." if self.tail == ALL_ONES else ""
        sep = parts or dots
        return f"[{self.a0};{parts}{dots}]" if sep else f"[{self.a0}]"


@dataclass(frozen=True)
class Convergent:
    """Best rational approximant p/q at index n of a continued fraction."""

    p: int
    q: int
    n: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError("p/q must be in lowest terms")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.p, self.q)


GOLDEN = CFExpansion(0, (), ALL_ONES)

_CF_RE = re.compile(r"^\s*\[\s*(-?\d+)\s*(?:;(.*))?\]\s*$")


def parse_cf(text: str) -> CFExpansion:
    """Parse literals like "[0;1,1,2]" or "[0;2,2,...]" ("..." = all-ones tail)."""
    m = _CF_RE.match(text)
    if not m:
        raise ValueError(f"malformed continued-fraction literal: {text!r}")
    a0 = int(m.group(1))
    rest = (m.group(2) or "").strip()
    tail = None
    if rest.endswith("..."):
        tail = ALL_ONES
        rest = rest[:-3].rstrip().rstrip(",")
    partials = []
    if rest:
        for tok in rest.split(","):
            tok = tok.strip()
            if not tok:
                raise ValueError(f"empty partial quotient in {text!r}")
            partials.append(int(tok))
    return CFExpansion(a0, tuple(partials), tail)


def convergents(cf: CFExpansion, n_max: int) -> list[Convergent]:
    """Convergents (p_0,q_0)..(p_nmax,q_nmax) from the standard recurrence."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if cf.is_rational and n_max > len(cf.partials):
        raise ValueError(
            f"finite expansion of length {len(cf.partials)} cannot give index {n_max}"
        )
    out = [Convergent(cf.a0, 1, 0)]
    p_prev, q_prev = 1, 0
    p, q = cf.a0, 1
    for n in range(1, n_max + 1):
        an = cf.partial(n)
        p, p_prev = an * p + p_prev, p
        q, q_prev = an * q + q_prev, q
        out.append(Convergent(p, q, n))
    return out


_GOLDEN_TAIL_CACHE = {}


def _golden_ratio() -> mpfr:
    # value of the all-ones continued fraction [1;1,1,...]
    P = get_precision()
    val = _GOLDEN_TAIL_CACHE.get(P)
    if val is None:
        val = (1 + gmpy2.sqrt(mpfr(5))) / 2
        _GOLDEN_TAIL_CACHE[P] = val
    return val


def cf_value(cf: CFExpansion) -> mpfr:
    """Value of the expansion as an extended-precision real.

    Finite expansions evaluate exactly via integer convergents.  An all-ones
    tail contributes its complete quotient t = [1;1,1,...] = (1+sqrt(5))/2:
    value = (p_m*t + p_{m-1}) / (q_m*t + q_{m-1}).
    """
    m = len(cf.partials)
    conv = convergents(CFExpansion(cf.a0, cf.partials, None), m)
    if cf.is_rational:
        return mpfr(conv[-1].p) / conv[-1].q
    t = _golden_ratio()
    if m == 0:
        p_m, q_m = cf.a0, 1
        p_prev, q_prev = 1, 0
    else:
        p_m, q_m = conv[m].p, conv[m].q
        p_prev, q_prev = conv[m - 1].p, conv[m - 1].q
    return (p_m * t + p_prev) / (q_m * t + q_prev)


def brjuno_sum(cf: CFExpansion, N: int) -> tuple[float, Optional[float]]:
    """Partial sum S_N = sum_{n=0}^{N} log(q_{n+1}) / q_n and a rigorous tail bound.

    The bound uses q_{n+2} >= 2 q_n together with log(q_{n+1}) <=
    log((A+1) q_n) for bounded type (A = max partial quotient):

        tail <= 2*log(2*(A+1)*q_{N+1})/q_{N+1} + 2*log(2*(A+1)*q_{N+2})/q_{N+2}.

    For finite (rational) expansions the tail bound is None.
    """
    bounded, A = is_bounded_type(cf)
    need = N + 2 if bounded else N + 1
    conv = convergents(cf, need)
    total = 0.0
    for n in range(N + 1):
        total += math.log(conv[n + 1].q) / conv[n].q
    if not bounded:
        return total, None

    def term(q):
        return 2.0 * math.log(2.0 * (A + 1) * q) / q

    return total, term(conv[N + 1].q) + term(conv[N + 2].q)


def noble_truncate(cf: CFExpansion, n: int) -> CFExpansion:
    """Keep entries a_0..a_n and continue with the all-ones tail."""
    if n < 0:
        raise ValueError("n must be >= 0")
    kept = []
    for i in range(1, n + 1):
        kept.append(cf.partial(i))
    return CFExpansion(cf.a0, tuple(kept), ALL_ONES)


def is_bounded_type(cf: CFExpansion) -> tuple[bool, Optional[int]]:
    """(True, max partial quotient) for all-ones-tail expansions, else (False, None)."""
    if cf.tail != ALL_ONES:
        return False, None
    return True, (max(cf.partials) if cf.partials else 1)


def unit_multiplier(x) -> XComplex:
    """e^(2*pi*i*x) for a real x (mpfr, float, int or Fraction)."""
    if isinstance(x, Fraction):
        ang = 2 * gmpy2.const_pi() * x.numerator / x.denominator
    else:
        ang = 2 * gmpy2.const_pi() * mpfr(x)
    return XComplex(gmpy2.cos(ang), gmpy2.sin(ang))
