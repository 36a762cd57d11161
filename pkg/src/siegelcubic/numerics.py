"""Extended-precision complex scalars and truncated power-series (jet) arithmetic.

Everything downstream (linearization series, iterate jets, parameter experiments)
runs on the two types defined here:

* ``XComplex`` -- a complex scalar with a configurable mantissa (default 192
  bits) and a huge exponent range, so magnitudes like ``r**-1000`` never
  overflow silently.  Out-of-range results raise instead of saturating.
* ``Jet`` -- a power series truncated at a fixed order, with dense
  coefficients; products and compositions agree with exact arithmetic on
  every retained coefficient.

The backend is gmpy2 (MPFR/MPC).  Arithmetic is deterministic for a fixed
mantissa size: same inputs give bit-identical outputs.
"""

from __future__ import annotations

import ctypes
import glob
import operator
import os
import threading

import gmpy2
from gmpy2 import mpc, mpfr

__all__ = [
    "DEFAULT_PRECISION",
    "KARATSUBA_THRESHOLD",
    "PrecisionError",
    "RangeError",
    "XComplex",
    "Jet",
    "configure",
    "get_precision",
    "eps",
    "jet_mul",
    "jet_compose",
    "cubic_jet",
]

DEFAULT_PRECISION = int(os.environ.get("SIEGELCUBIC_PRECISION", "192"))

# Naive convolution below this operand length, Karatsuba above.  Chosen from
# timings of gmpy2 mpc multiply-adds on x86-64; correctness does not depend
# on the value (both paths agree up to rounding at the working precision).
KARATSUBA_THRESHOLD = 48

# Exponent range requested from MPFR.  Values with |exponent| beyond this
# raise RangeError rather than turning into inf/0.
_EMAX = 1 << 40

# gmpy2's own exception for out-of-range results; re-exported so callers
# do not need to import gmpy2 to catch it.
RangeError = gmpy2.RangeError


class PrecisionError(ArithmeticError):
    """A computation cannot be carried out at the current mantissa size."""


def _unlock_exponent_range():
    # gmpy2 2.3.x stores context emax/emin but does not push them to MPFR's
    # working range, which stays at +-(2**30-1).  Raise the global range
    # directly on the bundled library; harmless if it is already wide.
    candidates = []
    libdir = os.path.join(os.path.dirname(os.path.dirname(gmpy2.__file__)), "gmpy2.libs")
    candidates.extend(sorted(glob.glob(os.path.join(libdir, "libmpfr*"))))
    candidates.append("libmpfr.so.6")
    candidates.append("libmpfr.so")
    for cand in candidates:
        try:
            lib = ctypes.CDLL(cand)
            lib.mpfr_set_emax.argtypes = [ctypes.c_long]
            lib.mpfr_set_emin.argtypes = [ctypes.c_long]
            ok = lib.mpfr_set_emax(_EMAX) == 0 and lib.mpfr_set_emin(-_EMAX) == 0
            if ok:
                return True
        except OSError:
            continue
    return False


_range_unlocked = _unlock_exponent_range()


def configure(precision: int = DEFAULT_PRECISION) -> int:
    """Install the working context (mantissa bits, exponent traps) for this thread.

    Must be called in every thread/process that performs arithmetic; importing
    the package configures the importing thread.  Returns the precision set.
    """
    if precision < 8:
        raise ValueError("precision must be at least 8 bits")
    emax = _EMAX if _range_unlocked else (1 << 30) - 1
    gmpy2.set_context(
        gmpy2.context(
            precision=precision,
            emax=emax,
            emin=-emax,
            trap_overflow=True,
            trap_underflow=True,
            trap_divzero=True,
            trap_invalid=True,
        )
    )
    _local.precision = precision
    return precision


def get_precision() -> int:
    return gmpy2.get_context().precision


def eps(bits_off: int = 0) -> mpfr:
    """2**(-P + bits_off) at the current working precision P."""
    return mpfr(2) ** (bits_off - get_precision())


_local = threading.local()
configure(DEFAULT_PRECISION)

_ZERO = mpc(0)


def _to_mpc(value) -> mpc:
    if isinstance(value, XComplex):
        return value._z
    if isinstance(value, mpc):
        return value
    if isinstance(value, (int, float, mpfr, str)):
        return mpc(mpfr(value))
    if isinstance(value, complex):
        return mpc(mpfr(value.real), mpfr(value.imag))
    raise TypeError(f"cannot interpret {type(value).__name__} as XComplex")


class XComplex:
    """Immutable extended-precision complex scalar.

    Construct from ints, floats, strings, ``complex`` or another XComplex;
    two-argument form takes (re, im).  Arithmetic rounds to the current
    working precision and raises ``RangeError`` on exponent overflow or
    underflow instead of producing inf/0.
    """

    __slots__ = ("_z",)

    def __init__(self, re=0, im=None):
        if im is None:
            object.__setattr__(self, "_z", _to_mpc(re))
        else:
            object.__setattr__(self, "_z", mpc(mpfr(re), mpfr(im)))

    @classmethod
    def _wrap(cls, raw: mpc) -> "XComplex":
        obj = object.__new__(cls)
        object.__setattr__(obj, "_z", raw)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("XComplex is immutable")

    @property
    def re(self) -> mpfr:
        return self._z.real

    @property
    def im(self) -> mpfr:
        return self._z.imag

    def __add__(self, other):
        return XComplex._wrap(self._z + _to_mpc(other))

    __radd__ = __add__

    def __sub__(self, other):
        return XComplex._wrap(self._z - _to_mpc(other))

    def __rsub__(self, other):
        return XComplex._wrap(_to_mpc(other) - self._z)

    def __mul__(self, other):
        return XComplex._wrap(self._z * _to_mpc(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return XComplex._wrap(self._z / _to_mpc(other))

    def __rtruediv__(self, other):
        return XComplex._wrap(_to_mpc(other) / self._z)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("only integer powers are supported")
        return XComplex._wrap(self._z ** k)

    def __neg__(self):
        return XComplex._wrap(-self._z)

    def __abs__(self) -> mpfr:
        return abs(self._z)

    def conjugate(self) -> "XComplex":
        return XComplex._wrap(gmpy2.mpc(self._z.real, -self._z.imag))

    def __eq__(self, other):
        try:
            return self._z == _to_mpc(other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash(self._z)

    def __complex__(self):
        return complex(self._z)

    def __repr__(self):
        return f"XComplex({self._z.real!r}, {self._z.imag!r})"

    def __reduce__(self):
        return (_xcomplex_from_binary, (gmpy2.to_binary(self._z),))


def _xcomplex_from_binary(blob):
    return XComplex._wrap(gmpy2.from_binary(blob))


# ---------------------------------------------------------------------------
# Jet kernels.  These operate on plain lists of gmpy2.mpc to keep the inner
# loops free of wrapper overhead; Jet wraps the results.
# ---------------------------------------------------------------------------


def _conv_short(x: list, y: list, M: int) -> list:
    """Coefficients 0..M of the Cauchy product, schoolbook."""
    nx, ny = len(x), len(y)
    yr = y[::-1]
    mul = operator.mul
    out = []
    for k in range(M + 1):
        i0 = k - ny + 1
        if i0 < 0:
            i0 = 0
        i1 = k if k < nx - 1 else nx - 1
        if i0 > i1:
            out.append(_ZERO)
            continue
        j0 = ny - 1 - k + i0
        out.append(sum(map(mul, x[i0 : i1 + 1], yr[j0 : j0 + i1 - i0 + 1])))
    return out


def _conv_full(x: list, y: list, threshold: int) -> list:
    """Full Cauchy product via Karatsuba splitting above the threshold."""
    n, m = len(x), len(y)
    if n < m:
        x, y, n, m = y, x, m, n
    if m <= threshold:
        return _conv_short(x, y, n + m - 2)
    h = (n + 1) // 2
    x0, x1 = x[:h], x[h:]
    y0, y1 = y[:h], y[h:]
    out = [_ZERO] * (n + m - 1)
    if not y1:
        lo = _conv_full(x0, y, threshold)
        hi = _conv_full(x1, y, threshold)
        out[: len(lo)] = lo
        for i, v in enumerate(hi):
            out[h + i] += v
        return out
    z0 = _conv_full(x0, y0, threshold)
    z2 = _conv_full(x1, y1, threshold)
    xs = [a + b for a, b in zip(x0, x1)]
    xs += x0[len(x1):] or x1[len(x0):]
    ys = [a + b for a, b in zip(y0, y1)]
    ys += y0[len(y1):] or y1[len(y0):]
    z1 = _conv_full(xs, ys, threshold)
    for i, v in enumerate(z0):
        z1[i] -= v
    for i, v in enumerate(z2):
        z1[i] -= v
    out[: len(z0)] = z0
    for i, v in enumerate(z1):
        out[h + i] += v
    base = 2 * h
    for i, v in enumerate(z2):
        out[base + i] += v
    return out


def _fit_slope(x: list) -> float:
    """Least-squares growth rate (bits per index) of the machine exponents of x."""
    pts = [(k, gmpy2.get_exp(abs(v))) for k, v in enumerate(x) if v != 0]
    if len(pts) < 2:
        return 0.0
    n = len(pts)
    sk = sum(p[0] for p in pts)
    se = sum(p[1] for p in pts)
    skk = sum(p[0] * p[0] for p in pts)
    ske = sum(p[0] * p[1] for p in pts)
    denom = n * skk - sk * sk
    return (n * ske - sk * se) / denom if denom else 0.0


def _rescale_slope(x: list, m: float):
    """x_k * 2^(-m*k) together with the exponent spread of the result."""
    out = []
    lo = hi = None
    for k, v in enumerate(x):
        if v == 0:
            out.append(v)
            continue
        w = v * gmpy2.exp2(mpfr(-m * k)) if m != 0.0 else v
        out.append(w)
        e = gmpy2.get_exp(abs(w))
        lo = e if lo is None or e < lo else lo
        hi = e if hi is None or e > hi else hi
    spread = 0.0 if lo is None else float(hi - lo)
    return out, spread


def _mul_raw(x: list, y: list, M: int, threshold: int) -> list:
    if min(len(x), len(y)) <= threshold:
        return _conv_short(x, y, M)
    # Karatsuba's cross-term cancellations are only well conditioned on
    # coefficients of comparable size.  Jets here typically grow geometrically
    # (|c_k| ~ r^-k), so flatten both operands by one common geometric rescale
    # (then (x~*y~)_k = 2^(-m k) (x*y)_k); if the flattened spread would still
    # eat into the precision, stay schoolbook.
    x = x[: M + 1]
    y = y[: M + 1]
    m = 0.5 * (_fit_slope(x) + _fit_slope(y))
    fx, sx = _rescale_slope(x, m)
    fy, sy = _rescale_slope(y, m)
    if max(sx, sy) > get_precision() // 4:
        return _conv_short(x, y, M)
    full = _conv_full(fx, fy, threshold)
    del full[M + 1 :]
    if m != 0.0:
        full = [v if v == 0 else v * gmpy2.exp2(mpfr(m * k)) for k, v in enumerate(full)]
    full.extend([_ZERO] * (M + 1 - len(full)))
    return full


def _scale_raw(x: list, s: mpc) -> list:
    return [s * v for v in x]


def _add_raw(x: list, y: list) -> list:
    if len(x) < len(y):
        x, y = y, x
    out = [a + b for a, b in zip(x, y)]
    out.extend(x[len(y):])
    return out


class Jet:
    """Power series truncated at a fixed order M (coefficients of z^0..z^M).

    Coefficients of z^k for k <= M are exact in exact arithmetic: every
    operation truncates consistently.  Instances are immutable.
    """

    __slots__ = ("_c", "order")

    def __init__(self, coeffs, order: int | None = None):
        raw = [_to_mpc(c) for c in coeffs]
        if order is None:
            order = len(raw) - 1
        if order < 0:
            raise ValueError("jet order must be nonnegative")
        raw = raw[: order + 1]
        raw.extend([_ZERO] * (order + 1 - len(raw)))
        object.__setattr__(self, "_c", raw)
        object.__setattr__(self, "order", order)

    @classmethod
    def _wrap(cls, raw: list) -> "Jet":
        obj = object.__new__(cls)
        object.__setattr__(obj, "_c", raw)
        object.__setattr__(obj, "order", len(raw) - 1)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    @property
    def coeffs(self) -> tuple:
        return tuple(XComplex._wrap(c) for c in self._c)

    def coeff(self, k: int) -> XComplex:
        return XComplex._wrap(self._c[k])

    def __len__(self):
        return len(self._c)

    def truncate(self, M: int) -> "Jet":
        raw = self._c[: M + 1]
        return Jet._wrap(raw + [_ZERO] * (M + 1 - len(raw)))

    def __add__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        M = min(self.order, other.order)
        return Jet._wrap([a + b for a, b in zip(self._c[: M + 1], other._c[: M + 1])])

    def __sub__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        M = min(self.order, other.order)
        return Jet._wrap([a - b for a, b in zip(self._c[: M + 1], other._c[: M + 1])])

    def __mul__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, other, min(self.order, other.order))
        return Jet._wrap(_scale_raw(self._c, _to_mpc(other)))

    __rmul__ = __mul__

    def max_abs(self) -> mpfr:
        return max((abs(c) for c in self._c), default=mpfr(0))

    def eval(self, z) -> XComplex:
        zz = _to_mpc(z)
        acc = _ZERO
        for c in reversed(self._c):
            acc = acc * zz + c
        return XComplex._wrap(acc)

    def __repr__(self):
        head = ", ".join(str(complex(c)) for c in self._c[:4])
        tail = ", ..." if len(self._c) > 4 else ""
        return f"Jet(order={self.order}, [{head}{tail}])"


def jet_mul(x: Jet, y: Jet, M: int, threshold: int | None = None) -> Jet:
    """Cauchy product of two jets truncated at order M.

    Uses schoolbook convolution for operands up to ``threshold`` coefficients
    (default KARATSUBA_THRESHOLD) and Karatsuba above; the two paths agree up
    to rounding at the working precision.
    """
    thr = KARATSUBA_THRESHOLD if threshold is None else max(1, threshold)
    return Jet._wrap(_mul_raw(x._c, y._c, M, thr))


def jet_compose(outer: Jet, inner: Jet, M: int) -> Jet:
    """outer(inner(z)) truncated at order M; inner must vanish at 0.

    Horner evaluation in the jet algebra: len(outer)-1 jet products.
    """
    if inner._c and inner._c[0] != 0:
        raise ValueError("jet_compose requires inner coefficient c_0 = 0")
    ic = inner._c[: M + 1]
    oc = outer._c
    acc = [oc[-1]]
    thr = KARATSUBA_THRESHOLD
    for k in range(len(oc) - 2, -1, -1):
        acc = _mul_raw(acc, ic, M, thr)
        acc[0] += oc[k]
    acc.extend([_ZERO] * (M + 1 - len(acc)))
    return Jet._wrap(acc[: M + 1])


def cubic_jet(lam, a, M: int) -> Jet:
    """Jet of z -> lam*z + a*z^2 + z^3 at the origin, truncated at order M >= 3."""
    if M < 3:
        raise ValueError("cubic jet needs order M >= 3")
    raw = [_ZERO, _to_mpc(lam), _to_mpc(a), mpc(1)] + [_ZERO] * (M - 3)
    return Jet._wrap(raw)
