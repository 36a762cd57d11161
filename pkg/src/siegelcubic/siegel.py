"""Linearization of the Siegel fixed point of lam*z + a*z^2 + z^3.

The primary object is the inverse linearizer psi: a power series with
psi'(0) = 1 that conjugates the rigid rotation to the map,
psi(lam*w) = f(psi(w)).  Its coefficients come from a direct recursion with
small divisors lam^k - lam; the conformal radius of the Siegel disk is
estimated from the growth rate of |psi_k| (root-test slope), and the
linearizing coordinate phi = psi^{-1} is evaluated by Newton inversion.
"""

from __future__ import annotations

import cmath
import math
import operator
from dataclasses import dataclass
from typing import Callable, Optional

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .cubic import CubicMap, critical_points
from .numerics import XComplex, PrecisionError, _to_mpc, get_precision

__all__ = [
    "LinearizationSeries",
    "DegenerateSeriesError",
    "CaptureResult",
    "linearizer",
    "conformal_radius",
    "phi_eval",
    "capture_test",
    "u_along_path",
    "radius_log_fn",
    "functional_equation_residual",
    "RADIUS_ORDER",
    "MEMBERSHIP_ORDER",
]

# Default truncation orders: high for radius estimates, lower for membership
# tests where only moderate accuracy of phi is needed.
RADIUS_ORDER = 1024
MEMBERSHIP_ORDER = 256


class DegenerateSeriesError(ArithmeticError):
    """The coefficient tail is identically zero; no growth rate to fit."""


@dataclass(frozen=True)
class LinearizationSeries:
    """Inverse linearizer psi_1..psi_K (psi_1 = 1) with radius diagnostics.

    ``r_hat`` estimates the conformal radius of the Siegel disk (the
    convergence radius of psi); ``r_hat_err`` is the relative change between
    the half-order and full-order estimates; ``small_divisor_min`` is the
    smallest |lam^k - lam| met in the recursion.
    """

    lam: XComplex
    a: XComplex
    order: int
    psi: tuple                      # psi[0] unused (None), psi[1] = 1
    r_hat: Optional[float]
    r_hat_err: Optional[float]
    small_divisor_min: float

    def psi_coeff(self, k: int) -> XComplex:
        return XComplex._wrap(self.psi[k])

    def psi_eval(self, w) -> XComplex:
        ww = _to_mpc(w)
        acc = mpc(0)
        for k in range(self.order, 0, -1):
            acc = acc * ww + self.psi[k]
        return XComplex._wrap(acc * ww)

    def psi_deriv(self, w) -> XComplex:
        ww = _to_mpc(w)
        acc = mpc(0)
        for k in range(self.order, 0, -1):
            acc = acc * ww + k * self.psi[k]
        return XComplex._wrap(acc)

    def scaled_float_coeffs(self) -> np.ndarray:
        """psi_k * r_hat^k as complex128 (bounded; used to seed Newton inversion)."""
        if self.r_hat is None:
            raise DegenerateSeriesError("series carries no radius estimate")
        lr = math.log(self.r_hat)
        out = np.zeros(self.order + 1, dtype=np.complex128)
        for k in range(1, self.order + 1):
            c = self.psi[k]
            if c == 0:
                continue
            m = gmpy2.log(abs(c)) + k * lr
            fm = float(m)
            if fm < -700.0:
                continue
            out[k] = cmath.rect(math.exp(fm), float(gmpy2.phase(c)))
        return out


def linearizer(f: CubicMap, K: int) -> LinearizationSeries:
    """Solve psi(lam*w) = lam*psi + a*psi^2 + psi^3 coefficientwise to order K.

    (lam^k - lam) psi_k = [w^k](a psi^2 + psi^3); the right side only
    involves psi_j with j < k.  Fails with PrecisionError when a small
    divisor drops below 2^(-P/2): the multiplier is too close to resonance
    for the working precision.
    """
    if K < 2:
        raise ValueError("linearizer needs order K >= 2")
    lam = f.lam._z
    a = f.a._z
    floor = mpfr(2) ** (-(get_precision() // 2))
    mul = operator.mul
    psi = [None, mpc(1)]
    sq = [None, None]           # sq[k] = [w^k] psi^2, final once psi_{k-1} is known
    lam_k = lam
    min_div = None
    for k in range(2, K + 1):
        lam_k = lam_k * lam
        div = lam_k - lam
        ad = abs(div)
        if ad < floor:
            raise PrecisionError(
                f"small divisor |lam^{k} - lam| = {float(ad):.3e} below 2^-P/2; "
                "raise the precision or lower the order"
            )
        if min_div is None or ad < min_div:
            min_div = ad
        s2 = sum(map(mul, psi[1:k], psi[k - 1 : 0 : -1]))
        s3 = sum(map(mul, sq[2:k], psi[k - 2 : 0 : -1])) if k >= 3 else mpc(0)
        psi.append((a * s2 + s3) / div)
        sq.append(s2)
    series = LinearizationSeries(
        lam=XComplex._wrap(lam),
        a=XComplex._wrap(a),
        order=K,
        psi=tuple(psi),
        r_hat=None,
        r_hat_err=None,
        small_divisor_min=float(min_div),
    )
    if K >= 64:
        r_hat, r_hat_err = conformal_radius(series)
        series = LinearizationSeries(
            series.lam, series.a, K, series.psi, r_hat, r_hat_err, series.small_divisor_min
        )
    return series


def _slope_fit(psi: tuple, lo: int, hi: int) -> float:
    ks, logs = [], []
    for k in range(lo, hi + 1):
        c = psi[k]
        if c == 0:
            continue
        ks.append(float(k))
        logs.append(float(gmpy2.log(abs(c))))
    if len(ks) < 2:
        raise DegenerateSeriesError("all coefficients vanish on the fitting window")
    A = np.vstack([np.array(ks), np.ones(len(ks))]).T
    slope = np.linalg.lstsq(A, np.array(logs), rcond=None)[0][0]
    return slope


def conformal_radius(series: LinearizationSeries) -> tuple[float, float]:
    """Root-test estimate of the convergence radius of psi.

    Least-squares slope of log|psi_k| against k over the top half of the
    computed indices (zero coefficients skipped, so the lacunary pattern at
    a = 0 is harmless); r_hat = exp(-slope).  The error figure compares with
    the same estimate at half the order.
    """
    K = series.order
    if K < 64:
        raise ValueError("conformal_radius needs order K >= 64")
    r_full = math.exp(-_slope_fit(series.psi, K // 2 + 1, K))
    r_half = math.exp(-_slope_fit(series.psi, K // 4 + 1, K // 2))
    return r_full, abs(r_full - r_half) / r_full


def functional_equation_residual(series: LinearizationSeries) -> float:
    """max_k |[w^k](psi(lam w) - f(psi(w)))| / max_k |psi_k| through the order."""
    from .numerics import Jet, jet_mul

    K = series.order
    lam = series.lam._z
    a = series.a._z
    c = [mpc(0)] + list(series.psi[1 : K + 1])
    jet = Jet._wrap(list(c))
    p2 = jet_mul(jet, jet, K)
    p3 = jet_mul(p2, jet, K)
    worst = mpfr(0)
    scale = mpfr(0)
    lam_k = mpc(1)
    for k in range(1, K + 1):
        lam_k = lam_k * lam
        lhs = c[k] * lam_k
        rhs = lam * c[k] + a * p2._c[k] + p3._c[k]
        r = abs(lhs - rhs)
        if r > worst:
            worst = r
        m = abs(c[k])
        if m > scale:
            scale = m
    return float(worst / scale)


def phi_eval(series: LinearizationSeries, z, rho: float = 0.98,
             max_iter: int = 80) -> Optional[XComplex]:
    """Invert psi at z: the w with psi(w) = z, i.e. the linearizing coordinate.

    Newton iteration seeded at w = z (with a hardware-float pre-pass when a
    radius estimate is available).  Succeeds only if the residual satisfies
    |psi(w) - z| <= 2^(-P/2) |z| and |w| stays below rho * r_hat; returns
    None as the outside-domain signal otherwise.
    """
    zz = _to_mpc(z)
    if zz == 0:
        return XComplex(0)
    P = get_precision()
    tol = abs(zz) * (mpfr(2) ** (-(P // 2)))
    r_hat = series.r_hat
    cap = rho * r_hat if r_hat is not None else None

    w = zz
    if r_hat is not None:
        seed = _float_newton_seed(series, zz, rho)
        if seed is not None:
            w = seed
    for _ in range(max_iter):
        r = series.psi_eval(XComplex._wrap(w))._z - zz
        if abs(r) <= tol:
            if cap is not None and abs(w) > cap:
                return None
            return XComplex._wrap(w)
        d = series.psi_deriv(XComplex._wrap(w))._z
        if d == 0:
            return None
        w = w - r / d
        if cap is not None and abs(w) > 1.5 * cap:
            return None
    return None


def _float_newton_seed(series: LinearizationSeries, zz: mpc, rho: float) -> Optional[mpc]:
    try:
        zf = complex(zz)
    except OverflowError:
        return None
    coeffs = _scaled_cache(series)
    r_hat = series.r_hat
    zt = zf / r_hat
    if abs(zt) > 4.0:
        return None
    deriv = np.polynomial.polynomial.polyder(coeffs)
    w = zt
    for _ in range(60):
        pw = np.polynomial.polynomial.polyval(w, coeffs)
        r = pw - zt
        if abs(r) < 1e-13 * max(abs(zt), 1e-30):
            break
        dw = np.polynomial.polynomial.polyval(w, deriv)
        if dw == 0 or not (math.isfinite(dw.real) and math.isfinite(dw.imag)):
            return None
        w = w - r / dw
        if not (math.isfinite(w.real) and math.isfinite(w.imag)) or abs(w) > 4.0:
            return None
    return mpc(mpfr(w.real * r_hat), mpfr(w.imag * r_hat))


def _scaled_cache(series: LinearizationSeries) -> np.ndarray:
    hit = series.__dict__.get("_scaled_coeffs")
    if hit is None:
        # psi(r w)/r in float coefficients; bounded since |psi_k| ~ r^-k
        hit = series.scaled_float_coeffs() / series.r_hat
        object.__setattr__(series, "_scaled_coeffs", hit)
    return hit


@dataclass(frozen=True)
class CaptureResult:
    verdict: str                       # "captured" | "escaped" | "not-captured"
    landed_at: Optional[int] = None
    w: Optional[XComplex] = None
    critical_point: Optional[XComplex] = None

    @property
    def captured(self) -> bool:
        return self.verdict == "captured"


def capture_test(f: CubicMap, series: LinearizationSeries, c, budget: int = 512,
                 rho: float = 0.9) -> CaptureResult:
    """First index k <= budget with f^k(c) inside the Siegel disk, via phi.

    A point counts as inside when phi_eval succeeds and |w| < rho * r_hat
    (safety factor rho in (0,1)).  Orbits passing the escape radius give the
    "escaped" verdict; exhausting the budget gives "not-captured" (which is a
    verdict, not an error).
    """
    if not 0 < rho < 1:
        raise ValueError("rho must be in (0, 1)")
    if series.r_hat is None:
        raise ValueError("series carries no radius estimate; build with K >= 64")
    lam, a = f.lam._z, f.a._z
    R = f.escape_radius()
    cap = rho * series.r_hat
    # coarse bound on |z| over the disk image: points far outside cannot be inside
    z_bound = _disk_image_bound(series, rho)
    z = _to_mpc(c)
    cx = XComplex._wrap(z)
    for k in range(budget + 1):
        az = abs(z)
        if az > R:
            return CaptureResult("escaped", critical_point=cx)
        if az <= z_bound:
            w = phi_eval(series, XComplex._wrap(z))
            if w is not None and abs(w._z) < cap:
                return CaptureResult("captured", k, w, cx)
        z = (lam + (a + z) * z) * z
    return CaptureResult("not-captured", critical_point=cx)


def _disk_image_bound(series: LinearizationSeries, rho: float) -> float:
    cache = series.__dict__.setdefault("_image_bounds", {})
    key = round(rho, 6)
    hit = cache.get(key)
    if hit is None:
        lr = math.log(series.r_hat * rho)
        total = 0.0
        for k in range(1, series.order + 1):
            c = series.psi[k]
            if c == 0:
                continue
            t = float(gmpy2.log(abs(c))) + k * lr
            if t < -700.0:
                continue
            total += math.exp(t)
        hit = 1.05 * total
        cache[key] = hit
    return hit


def radius_log_fn(lam, K: int = RADIUS_ORDER) -> Callable:
    """log r_hat as a function of the parameter a, for the family at fixed lam.

    Builder for u_along_path: each call runs the linearizer recursion at
    (lam, a) to order K and returns the log of the radius estimate.
    """
    lam = XComplex(lam)

    def log_radius(a) -> float:
        series = linearizer(CubicMap(lam, XComplex(a)), K)
        return math.log(series.r_hat)

    return log_radius


def u_along_path(path, log_radius: Callable, h: float) -> tuple[list[float], float]:
    """Imaginary increments of the holomorphic completion of log r along a polyline.

    ``log_radius(a: complex) -> float`` is the harmonic function whose
    conjugate is integrated: u'(a) = d/dx(log r) - i d/dy(log r) by central
    differences with step h, trapezoid rule per segment.  Returns the
    per-segment Im-u increments and an error estimate from one step halving.
    Failures of log_radius raise with the offending location attached.
    """
    pts = [complex(XComplex(p)) for p in path]
    if len(pts) < 2:
        return [], 0.0

    def uprime(aa: complex, step: float) -> complex:
        try:
            dx = (log_radius(aa + step) - log_radius(aa - step)) / (2 * step)
            dy = (log_radius(aa + 1j * step) - log_radius(aa - 1j * step)) / (2 * step)
        except Exception as exc:
            raise RuntimeError(f"radius estimation failed on stencil at a = {aa}") from exc
        return complex(dx, -dy)

    def increments(step: float) -> list[complex]:
        vals = [uprime(p, step) for p in pts]
        out = []
        for i in range(len(pts) - 1):
            da = pts[i + 1] - pts[i]
            out.append(0.5 * (vals[i] + vals[i + 1]) * da)
        return out

    inc_h = increments(h)
    inc_h2 = increments(h / 2)
    err = max(
        (abs(x.imag - y.imag) for x, y in zip(inc_h, inc_h2)),
        default=0.0,
    )
    return [x.imag for x in inc_h2], err
