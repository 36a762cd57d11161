"""Near-parabolic machinery at the rational approximants of the rotation number.

At lam_n = e^(2 pi i p_n/q_n) the q_n-fold iterate of the cubic is tangent to
the identity: f^q(z) = z + b_n(a) z^(q+1) + O(z^(q+2)).  This module computes
the coefficient b_n by jet composition (with a structural check that the
intermediate coefficients vanish), probes the near-parabolic return map in
the Siegel coordinate, tracks the argument of its displacement along
parameter paths (the destabilization mechanism), counts fixed points of the
return map by the argument principle, and measures the near-rotation
deviation statistic of the intermediate iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import gmpy2
from gmpy2 import mpc, mpfr

from .cubic import CubicMap, critical_points
from .numerics import XComplex, _to_mpc, cubic_jet, get_precision, jet_compose
from .rotation import CFExpansion, convergents, unit_multiplier
from .siegel import LinearizationSeries, capture_test, linearizer, phi_eval

__all__ = [
    "ParabolicStage",
    "PetalProbe",
    "WindingReport",
    "NormalFormError",
    "ContourError",
    "b_n_compute",
    "stage_for_convergent",
    "nondegenerate_test",
    "petal_probe",
    "winding_experiment",
    "count_fixed_points",
    "count_roots_on_contour",
    "jellouli_stat",
    "BAND_LO",
    "BAND_HI",
    "BAND_MARGIN",
]

# Attracting-band window for arg(displacement), and the dead zone around its
# edges inside which no verdict is issued.
BAND_LO = 3 * math.pi / 4
BAND_HI = 5 * math.pi / 4
BAND_MARGIN = 0.05


class NormalFormError(ArithmeticError):
    """Intermediate iterate coefficients failed to vanish: wrong multiplier
    or exhausted precision."""


class ContourError(ArithmeticError):
    """A contour passed too close to a zero of the probed function."""


@dataclass(frozen=True)
class ParabolicStage:
    """One rational stage: multiplier lam_n of exact order q, coefficient b_n.

    ``residual`` is the largest intermediate coefficient magnitude
    (indices 2..q of the q-fold iterate jet) divided by the largest
    coefficient magnitude met during the composition; it vanishes to
    2^(-P/2) when lam_n and the precision are sound.
    """

    n: Optional[int]
    p: Optional[int]
    q: int
    lam_n: XComplex
    b_n: XComplex
    residual: float

    @property
    def degenerate(self) -> bool:
        """b_n indistinguishable from zero at the working precision."""
        return self.b_n._z == 0

    def log_abs_b(self) -> float:
        if self.degenerate:
            raise ZeroDivisionError("degenerate stage: b_n = 0")
        return float(gmpy2.log(abs(self.b_n._z)))


def b_n_compute(lam_n, a, q: int, p: Optional[int] = None,
                n: Optional[int] = None, validate: bool = True) -> ParabolicStage:
    """Coefficient of z^(q+1) in the q-fold self-composition at multiplier lam_n.

    Cost: q compositions of jets of length q+2 (two truncated products each).
    Preconditions: lam_n^q = 1 and lam_n^j != 1 for 0 < j < q, checked
    numerically.  Raises NormalFormError when the intermediate coefficients
    2..q fail to vanish relative to the running coefficient scale.
    """
    lam = _to_mpc(lam_n)
    av = _to_mpc(a)
    P = get_precision()
    tol_unit = mpfr(2) ** (-(P - 8))
    if validate:
        _check_primitive_root(lam, q, tol_unit)
    M = q + 1
    fjet = cubic_jet(XComplex._wrap(lam), XComplex._wrap(av), max(M, 3)).truncate(M)
    g = fjet
    scale = g.max_abs()
    for _ in range(q - 1):
        g = jet_compose(fjet, g, M)
        s = g.max_abs()
        if s > scale:
            scale = s
    coeffs = g._c
    b = coeffs[q + 1] if q + 1 < len(coeffs) else mpc(0)
    mid = max((abs(c) for c in coeffs[2 : q + 1]), default=mpfr(0))
    residual = float(mid / scale) if scale > 0 else 0.0
    stage = ParabolicStage(n, p, q, XComplex._wrap(lam), XComplex._wrap(b), residual)
    if validate and residual > float(mpfr(2) ** (-(P // 2))):
        raise NormalFormError(
            f"intermediate coefficients do not vanish (residual {residual:.3e}); "
            f"multiplier is not a primitive root of order {q} or precision is exhausted"
        )
    return stage


def _check_primitive_root(lam: mpc, q: int, tol: mpfr):
    if q < 1:
        raise ValueError("q must be >= 1")
    if abs(abs(lam) - 1) > tol:
        raise ValueError("multiplier must lie on the unit circle")
    w = lam
    for j in range(1, q):
        if abs(w - 1) < 1e-9:
            raise ValueError(f"multiplier has order {j} < q = {q}")
        w = w * lam
    if abs(w - 1) > float(tol) * q * 16:
        raise ValueError("multiplier is not a q-th root of unity at working precision")


def stage_for_convergent(cf: CFExpansion, a, n: int, validate: bool = True) -> ParabolicStage:
    """Stage at the n-th convergent p_n/q_n of the rotation number."""
    conv = convergents(cf, n)[n]
    lam_n = unit_multiplier(conv.fraction)
    return b_n_compute(lam_n, a, conv.q, p=conv.p, n=n, validate=validate)


@dataclass(frozen=True)
class NondegeneracyMap:
    """|b_n| over a parameter grid with near-zero cells flagged."""

    q: int
    centers: tuple
    log_abs: tuple          # log|b_n| per cell (None where b_n = 0 exactly)
    flagged: tuple          # True where |b_n| < threshold * median
    threshold: float
    median_log_abs: float

    @property
    def any_flagged(self) -> bool:
        return any(self.flagged)


def nondegenerate_test(lam_n, q: int, centers: Sequence, threshold: float = 1e-6,
                       validate: bool = False) -> NondegeneracyMap:
    """Evaluate |b_n| at each parameter and flag cells close to a zero.

    b_n is a polynomial of degree q in the parameter, so its zeros are
    isolated; a cell is flagged when |b_n| < threshold * median(|b_n|) over
    the sample set (or vanishes outright).
    """
    logs = []
    for a in centers:
        stage = b_n_compute(lam_n, a, q, validate=validate)
        logs.append(None if stage.degenerate else stage.log_abs_b())
    finite = sorted(v for v in logs if v is not None)
    if not finite:
        med = float("-inf")
    else:
        med = finite[len(finite) // 2]
    cut = med + math.log(threshold)
    flagged = tuple(v is None or v < cut for v in logs)
    return NondegeneracyMap(
        q=q,
        centers=tuple(XComplex(c) for c in centers),
        log_abs=tuple(logs),
        flagged=flagged,
        threshold=threshold,
        median_log_abs=med,
    )


@dataclass(frozen=True)
class PetalProbe:
    """Displacement of one return-map step seen in the Siegel coordinate.

    ``delta`` is the principal logarithm of phi(f_n^q(z)) / phi(z); its
    argument locates the point among the attracting/repelling directions:
    arg(delta) in (3pi/4, 5pi/4) mod 2pi means drift toward the fixed point.
    """

    z_star: XComplex
    w: Optional[XComplex]
    delta: Optional[XComplex]
    verdict: str                    # "attracting-band" | "repelling-side" | "unresolved"
    band_index: Optional[int] = None
    reason: Optional[str] = None


def petal_probe(f_n: CubicMap, series: LinearizationSeries, z_star, q: int) -> PetalProbe:
    """Probe the q-step displacement at z_star in the linearizing coordinate.

    The coordinate belongs to the Siegel map at the irrational multiplier;
    the orbit is computed with the nearby rational-multiplier map f_n.  Both
    z_star and its q-th image must admit phi_eval.
    """
    zs = XComplex(z_star)
    w1 = phi_eval(series, zs)
    if w1 is None:
        return PetalProbe(zs, None, None, "unresolved", reason="phi_eval failed at z_star")
    lam, a = f_n.lam._z, f_n.a._z
    z = zs._z
    for _ in range(q):
        z = (lam + (a + z) * z) * z
    w2 = phi_eval(series, XComplex._wrap(z))
    if w2 is None:
        return PetalProbe(zs, w1, None, "unresolved", reason="phi_eval failed at f^q(z_star)")
    ratio = w2._z / w1._z
    if ratio == 1:
        return PetalProbe(zs, w1, XComplex(0), "unresolved", reason="zero displacement")
    delta = gmpy2.log(ratio)
    arg = float(gmpy2.phase(delta)) % (2 * math.pi)
    lo, hi = BAND_LO, BAND_HI
    if min(abs(arg - lo), abs(arg - hi)) < BAND_MARGIN:
        verdict = "unresolved"
        reason = "within margin of a band boundary"
    elif lo < arg < hi:
        verdict, reason = "attracting-band", None
    else:
        verdict, reason = "repelling-side", None
    return PetalProbe(zs, w1, XComplex._wrap(delta), verdict, None, reason)


@dataclass(frozen=True)
class WindingReport:
    n: int
    q: int
    total_arg_variation: float
    net_arg_variation: float
    band_crossings: int
    samples: tuple                  # (t, a, unwrapped arg delta)
    crossing_pairs: tuple           # (a_before, a_after) bracketing a band-center crossing


def _wrap_angle(d: float) -> float:
    return (d + math.pi) % (2 * math.pi) - math.pi


def winding_experiment(path, cf: CFExpansion, n: int, k: int,
                       series_order: int = 320,
                       samples_per_turn: Optional[int] = None,
                       max_samples: int = 200_000,
                       check_depth_at_vertices: bool = True) -> WindingReport:
    """Track arg(delta) continuously along a parameter path at stage n.

    At each sampled parameter a the probed point is z* = f_n^k(c_a) for the
    captured critical point c_a (tracked continuously from the first vertex);
    delta comes from petal_probe with a freshly linearized coordinate at
    (lam, a).  Sampling starts at ``samples_per_turn`` points (default
    8*q_n, enough that the expected q_n-fold winding cannot alias) and
    bisects any step with |d arg| >= pi/2.  Reports the total and net
    argument variation, the number of band-center crossings, and parameter
    pairs bracketing each crossing.
    """
    pts = [complex(XComplex(p)) for p in path]
    conv = convergents(cf, n)[n]
    q = conv.q
    lam = unit_multiplier(cf_value_cached(cf))
    lam_n = unit_multiplier(conv.fraction)
    if len(pts) < 2:
        return WindingReport(n, q, 0.0, 0.0, 0, tuple(), tuple())

    seg_len = [abs(pts[i + 1] - pts[i]) for i in range(len(pts) - 1)]
    total_len = sum(seg_len)
    if total_len == 0:
        return WindingReport(n, q, 0.0, 0.0, 0, tuple(), tuple())
    cum = [0.0]
    for L in seg_len:
        cum.append(cum[-1] + L)

    def point_at(t: float) -> complex:
        s = t * total_len
        for i in range(len(seg_len)):
            if s <= cum[i + 1] or i == len(seg_len) - 1:
                L = seg_len[i]
                u = 0.0 if L == 0 else (s - cum[i]) / L
                return pts[i] + u * (pts[i + 1] - pts[i])
        return pts[-1]

    state = {"c": None}

    def delta_at(t: float):
        a = XComplex(point_at(t))
        fs = CubicMap(lam, a)
        fn = CubicMap(lam_n, a)
        series = linearizer(fs, series_order)
        c1, c2 = critical_points(fn)
        if state["c"] is None:
            cap = capture_test(fs, series, c1, budget=max(k, 4))
            chosen = c1 if (cap.captured and cap.landed_at == k) else c2
        else:
            prev = state["c"]
            chosen = c1 if abs(c1._z - prev) < abs(c2._z - prev) else c2
        state["c"] = chosen._z
        z = chosen._z
        for _ in range(k):
            z = (fn.lam._z + (fn.a._z + z) * z) * z
        probe = petal_probe(fn, series, XComplex._wrap(z), q)
        if probe.delta is None:
            raise ContourError(f"probe unresolved at a = {complex(a)}: {probe.reason}")
        return float(gmpy2.phase(probe.delta._z)), a

    if check_depth_at_vertices:
        for v in pts:
            fs = CubicMap(lam, XComplex(v))
            series_v = linearizer(fs, series_order)
            c1, c2 = critical_points(fs)
            ok = False
            for c in (c1, c2):
                cap = capture_test(fs, series_v, c, budget=max(k, 4))
                if cap.captured and cap.landed_at == k:
                    ok = True
                    break
            if not ok:
                raise ValueError(f"capture depth {k} does not hold at path vertex {v}")

    n0 = samples_per_turn if samples_per_turn is not None else max(64, 8 * q)
    ts = [i / n0 for i in range(n0 + 1)]
    recs = [delta_at(t) for t in ts]

    i = 0
    while i < len(ts) - 1:
        step = _wrap_angle(recs[i + 1][0] - recs[i][0])
        gap = ts[i + 1] - ts[i]
        if abs(step) >= math.pi / 2:
            if len(ts) >= max_samples or gap < 1e-12:
                raise ContourError(
                    "branch tracking failed: refinement exhausted near "
                    f"t = {ts[i]:.6g} (path too coarse near a degeneracy)"
                )
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            recs.insert(i + 1, delta_at(tm))
        else:
            i += 1

    unwrapped = [recs[0][0]]
    for i in range(len(ts) - 1):
        unwrapped.append(unwrapped[-1] + _wrap_angle(recs[i + 1][0] - recs[i][0]))
    total = sum(abs(_wrap_angle(recs[i + 1][0] - recs[i][0])) for i in range(len(ts) - 1))
    net = unwrapped[-1] - unwrapped[0]

    def center_cell(x: float) -> int:
        return math.floor((x - math.pi) / (2 * math.pi))

    crossings = 0
    pairs = []
    for i in range(len(ts) - 1):
        c0, c1 = center_cell(unwrapped[i]), center_cell(unwrapped[i + 1])
        if c0 != c1:
            crossings += abs(c1 - c0)
            pairs.append((recs[i][1], recs[i + 1][1]))
    samples = tuple((ts[i], recs[i][1], unwrapped[i]) for i in range(len(ts)))
    return WindingReport(n, q, total, net, crossings, samples, tuple(pairs))


_CF_VALUE_CACHE: dict = {}


def cf_value_cached(cf: CFExpansion):
    from .rotation import cf_value

    key = (cf, get_precision())
    hit = _CF_VALUE_CACHE.get(key)
    if hit is None:
        hit = cf_value(cf)
        if len(_CF_VALUE_CACHE) > 256:
            _CF_VALUE_CACHE.clear()
        _CF_VALUE_CACHE[key] = hit
    return hit


def count_roots_on_contour(fn: Callable, contour: Callable, m0: int = 128,
                           max_m: int = 1 << 17) -> int:
    """Argument-principle root count of fn inside a closed contour.

    ``contour(t)`` maps [0,1) to the contour; sampling doubles from m0 until
    the winding integer is unchanged twice in a row and every argument step
    is below pi/2.  Raises ContourError when the contour passes through (or
    numerically grazes) a zero.
    """
    m = m0
    last = None
    stable = 0
    while m <= max_m:
        vals = [_to_mpc(fn(contour(j / m))) for j in range(m)]
        mods = [abs(v) for v in vals]
        vmax = max(mods)
        if vmax == 0 or min(mods) < 1e-13 * float(vmax):
            raise ContourError("contour passes through a zero; choose a different radius")
        args = [float(gmpy2.phase(v)) for v in vals]
        steps = [_wrap_angle(args[(j + 1) % m] - args[j]) for j in range(m)]
        if max(abs(s) for s in steps) < math.pi / 2:
            wind = round(sum(steps) / (2 * math.pi))
            if wind == last:
                stable += 1
                if stable >= 2:
                    return wind
            else:
                stable = 0
            last = wind
        else:
            last, stable = None, 0
        m *= 2
    raise ContourError("winding did not stabilize under sample doubling")


def count_fixed_points(f_n: CubicMap, series: LinearizationSeries, q: int,
                       r1: float = 0.5, m: int = 128) -> tuple[int, int]:
    """Count fixed points of f_n^q inside the image of the disk |w| < r1*r_hat.

    The contour is psi(r1 * r_hat * e^(2 pi i t)); the counted function is
    f_n^q(z) - z, evaluated by iteration (never expanded).  Returns
    (winding, N_extra) where winding is the total count with multiplicity
    and N_extra = winding - (q+1) subtracts the origin, a root of
    multiplicity q+1 whenever b_n != 0.
    """
    if series.r_hat is None:
        raise ValueError("series carries no radius estimate")
    lam, a = f_n.lam._z, f_n.a._z
    radius = r1 * series.r_hat

    def contour(t: float):
        ang = 2 * gmpy2.const_pi() * mpfr(t)
        w = radius * mpc(gmpy2.cos(ang), gmpy2.sin(ang))
        return series.psi_eval(XComplex._wrap(w))._z

    def displaced(z: mpc):
        zz = z
        for _ in range(q):
            zz = (lam + (a + zz) * zz) * zz
        return zz - z

    winding = count_roots_on_contour(displaced, contour, m0=m)
    return winding, winding - (q + 1)


@dataclass(frozen=True)
class JellouliStat:
    n: int
    q: int
    c_hat: float
    samples_used: int
    samples_skipped: int


def jellouli_stat(lam, a, cf: CFExpansion, n: int, r0: float = 0.5,
                  samples: int = 8, series: Optional[LinearizationSeries] = None,
                  series_order: int = 320,
                  orbit_map: Optional[CubicMap] = None) -> JellouliStat:
    """Empirical constant in the near-rotation bound for intermediate iterates.

    For sample points z on the circle |z| = r0 * r_hat in the linearizing
    coordinate, the deviation |phi(f_n^k(psi(z))) - lam_n^k z| is compared
    with k |z| / q_n^2 over 1 <= k <= q_n; the returned statistic is the
    maximal ratio.  Samples whose orbit leaves the coordinate patch are
    skipped and counted; all samples skipped is an error.

    ``orbit_map`` overrides the map generating the orbit (default: the cubic
    at the rational multiplier lam_n); passing the Siegel map itself turns
    the statistic into a pure rotation-mismatch measure.
    """
    conv = convergents(cf, n)[n]
    q = conv.q
    lam_n = unit_multiplier(conv.fraction)
    f_n = orbit_map if orbit_map is not None else CubicMap(lam_n, XComplex(a))
    if series is None:
        series = linearizer(CubicMap(XComplex(lam), XComplex(a)), series_order)
    if series.r_hat is None:
        raise ValueError("series carries no radius estimate")
    radius = r0 * series.r_hat
    c_hat = 0.0
    used = skipped = 0
    lam_orbit = f_n.lam._z
    lam_ref = lam_n._z
    av = f_n.a._z
    for j in range(samples):
        ang = 2 * gmpy2.const_pi() * mpfr(2 * j + 1) / (2 * samples)
        z = radius * mpc(gmpy2.cos(ang), gmpy2.sin(ang))
        zp = series.psi_eval(XComplex._wrap(z))._z
        lk = mpc(1)
        ok = True
        best = 0.0
        for k in range(1, q + 1):
            zp = (lam_orbit + (av + zp) * zp) * zp
            lk = lk * lam_ref
            w = phi_eval(series, XComplex._wrap(zp))
            if w is None:
                ok = False
                break
            dev = float(abs(w._z - lk * z)) * q * q / (k * float(abs(z)))
            if dev > best:
                best = dev
        if ok:
            used += 1
            if best > c_hat:
                c_hat = best
        else:
            skipped += 1
    if used == 0:
        raise ValueError("all sample orbits left the coordinate patch")
    return JellouliStat(n, q, c_hat, used, skipped)
