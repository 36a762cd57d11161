"""Parameter-plane rasters and the packaged limit experiments.

Rasters classify each cell of a rectangular grid in the a-plane (escape /
capture(k) / undecided), carry the Lyapunov field, and feed a discrete
slice-current density (five-point Laplacian of L over 2 pi).  The two table
experiments check the coefficient scaling law |b_n|^(1/q_n) -> 1/r_hat and
the stability of radius and capture depth along noble truncations of the
rotation number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .cubic import CubicMap, critical_points, green, lyapunov
from .numerics import XComplex, PrecisionError
from .rotation import CFExpansion, cf_value, convergents, noble_truncate, unit_multiplier
from .siegel import MEMBERSHIP_ORDER, RADIUS_ORDER, capture_test, linearizer
from .parabolic import stage_for_convergent

__all__ = [
    "GridSpec",
    "Raster",
    "classify_raster",
    "lyapunov_raster",
    "slice_current_density",
    "bn_scaling_experiment",
    "noble_radius_experiment",
    "find_component_center",
]

CLASS_ESCAPE = "escape"
CLASS_CAPTURE = "capture"
CLASS_UNDECIDED = "undecided"


@dataclass(frozen=True)
class GridSpec:
    """Square grid of parameter cells, enumerated row-major (deterministic)."""

    center: complex
    half_width: float
    resolution: int

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "center", complex(XComplex(self.center)))

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / self.resolution

    def cell_center(self, row: int, col: int) -> complex:
        h = self.half_width
        s = self.step
        return self.center + complex(-h + (col + 0.5) * s, -h + (row + 0.5) * s)

    def centers(self) -> list[complex]:
        return [
            self.cell_center(r, c)
            for r in range(self.resolution)
            for c in range(self.resolution)
        ]


@dataclass
class Raster:
    """Per-cell classification and scalar fields over a GridSpec."""

    spec: GridSpec
    classes: np.ndarray          # object array: "escape" | "capture" | "undecided"
    capture_depth: np.ndarray    # int, -1 where not captured
    L: np.ndarray                # float Lyapunov field (nan where not computed)
    undecided_L: np.ndarray      # bool: L came from a bounded-within-budget verdict
    components: Optional[np.ndarray] = None   # int labels, 0 = not capture
    meta: dict = field(default_factory=dict)

    def class_counts(self) -> dict:
        out: dict = {}
        for v in self.classes.ravel():
            out[v] = out.get(v, 0) + 1
        return out


def _label_components(capture_mask: np.ndarray) -> np.ndarray:
    """4-connected component labels in row-major first-seen order."""
    n = capture_mask.shape[0]
    labels = np.zeros_like(capture_mask, dtype=np.int64)
    nxt = 0
    for r in range(n):
        for c in range(n):
            if not capture_mask[r, c] or labels[r, c]:
                continue
            nxt += 1
            stack = [(r, c)]
            labels[r, c] = nxt
            while stack:
                rr, cc = stack.pop()
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    r2, c2 = rr + dr, cc + dc
                    if 0 <= r2 < n and 0 <= c2 < n and capture_mask[r2, c2] and not labels[r2, c2]:
                        labels[r2, c2] = nxt
                        stack.append((r2, c2))
    return labels


def classify_raster(lam, spec: GridSpec, capture_budget: int = 256,
                    green_budget: int = 2000, series_order: int = MEMBERSHIP_ORDER,
                    rho: float = 0.9, tol: float = 1e-9) -> Raster:
    """Classify every cell: escape (a critical orbit escapes), capture(k), or undecided.

    Escape is decided first from the escape potential of both critical
    orbits; surviving cells run the capture test on both critical points
    with a per-cell linearization at (lam, a).  Capture cells receive
    4-connected component labels.  Deterministic for fixed budgets.
    """
    lam = XComplex(lam)
    n = spec.resolution
    classes = np.full((n, n), CLASS_UNDECIDED, dtype=object)
    depth = np.full((n, n), -1, dtype=np.int64)
    Lfield = np.full((n, n), np.nan)
    undecided_L = np.zeros((n, n), dtype=bool)
    for r in range(n):
        for c in range(n):
            a = XComplex(spec.cell_center(r, c))
            f = CubicMap(lam, a)
            c1, c2 = critical_points(f)
            g1 = green(f, c1, tol, green_budget)
            g2 = green(f, c2, tol, green_budget)
            Lfield[r, c] = math.log(3.0) + g1.value + g2.value
            undecided_L[r, c] = g1.undecided or g2.undecided
            if not (g1.undecided and g2.undecided):
                classes[r, c] = CLASS_ESCAPE
                continue
            try:
                series = linearizer(f, series_order)
            except PrecisionError:
                continue
            if series.r_hat is None:
                continue
            best = None
            for cp in (c1, c2):
                res = capture_test(f, series, cp, budget=capture_budget, rho=rho)
                if res.captured and (best is None or res.landed_at < best):
                    best = res.landed_at
            if best is not None:
                classes[r, c] = CLASS_CAPTURE
                depth[r, c] = best
    components = _label_components(classes == CLASS_CAPTURE)
    return Raster(
        spec=spec,
        classes=classes,
        capture_depth=depth,
        L=Lfield,
        undecided_L=undecided_L,
        components=components,
        meta={
            "lam": complex(lam),
            "capture_budget": capture_budget,
            "green_budget": green_budget,
            "series_order": series_order,
            "rho": rho,
            "tol": tol,
        },
    )


def lyapunov_raster(lam, spec: GridSpec, tol: float = 1e-6,
                    green_budget: int = 10_000) -> Raster:
    """Lyapunov field L = log 3 + G(c+) + G(c-) per cell.

    Cells whose critical orbits stay bounded within budget report exactly
    log 3 and are marked undecided-for-escape; they are what the slice
    current masks.
    """
    lam = XComplex(lam)
    n = spec.resolution
    classes = np.full((n, n), CLASS_UNDECIDED, dtype=object)
    Lfield = np.full((n, n), np.nan)
    undecided_L = np.zeros((n, n), dtype=bool)
    for r in range(n):
        for c in range(n):
            f = CubicMap(lam, XComplex(spec.cell_center(r, c)))
            res = lyapunov(f, tol, green_budget)
            Lfield[r, c] = res.value
            undecided_L[r, c] = res.undecided
            classes[r, c] = CLASS_UNDECIDED if res.undecided else CLASS_ESCAPE
    return Raster(
        spec=spec,
        classes=classes,
        capture_depth=np.full((n, n), -1, dtype=np.int64),
        L=Lfield,
        undecided_L=undecided_L,
        meta={"lam": complex(lam), "tol": tol, "green_budget": green_budget},
    )


@dataclass(frozen=True)
class CurrentDensity:
    masses: np.ndarray           # nan on masked cells
    total: float
    mask_fraction: float
    warning: Optional[str]


def slice_current_density(raster: Raster, mask: Optional[np.ndarray] = None) -> CurrentDensity:
    """Discrete slice-current mass per cell: five-point Laplacian of L over 2 pi.

    mass = (sum of 4-neighbour L - 4 L) / (2 pi); the step-size factors
    cancel against the cell area.  Masked cells (undecided, nan, or border)
    propagate nan.  A mask fraction above one half sets a warning flag.
    """
    L = raster.L
    n = L.shape[0]
    bad = np.isnan(L)
    if mask is not None:
        bad = bad | mask
    else:
        bad = bad | raster.undecided_L
    masses = np.full_like(L, np.nan)
    lap = np.zeros_like(L)
    lap[1:-1, 1:-1] = (
        L[:-2, 1:-1] + L[2:, 1:-1] + L[1:-1, :-2] + L[1:-1, 2:] - 4.0 * L[1:-1, 1:-1]
    )
    good = np.zeros_like(bad)
    good[1:-1, 1:-1] = ~(
        bad[1:-1, 1:-1] | bad[:-2, 1:-1] | bad[2:, 1:-1] | bad[1:-1, :-2] | bad[1:-1, 2:]
    )
    masses[good] = lap[good] / (2.0 * math.pi)
    interior = (n - 2) * (n - 2) if n > 2 else 0
    masked = interior - int(good.sum())
    frac = masked / interior if interior else 1.0
    warning = "mask fraction above 50%" if frac > 0.5 else None
    total = float(np.nansum(masses[good])) if interior else 0.0
    return CurrentDensity(masses, total, frac, warning)


@dataclass(frozen=True)
class ScalingRow:
    n: int
    q: int
    log_abs_b_over_q: Optional[float]   # None on degenerate stages
    neg_log_r_hat: float
    e_n: Optional[float]
    residual: float
    degenerate: bool


@dataclass(frozen=True)
class ScalingTable:
    rows: tuple
    r_hat: float
    r_hat_err: float
    truncated_reason: Optional[str] = None

    def asymptotic_rows(self, q_min: int = 3) -> list[ScalingRow]:
        return [r for r in self.rows if not r.degenerate and r.q >= q_min]


def bn_scaling_experiment(a, cf: CFExpansion, n_range: Sequence[int],
                          radius_order: int = RADIUS_ORDER,
                          degeneracy_margin: float = math.log(10.0)) -> ScalingTable:
    """Rows (n, q_n, (1/q_n) log|b_n|, -log r_hat, e_n) for the scaling law.

    A stage is recorded as degenerate (no e_n) when b_n vanishes outright or
    when |b_n|^(1/q_n) sits more than a factor exp(degeneracy_margin) below
    the expected scale 1/r_hat -- the gate that refuses parameters at or
    near a zero of b_n.  Precision exhaustion truncates the table with a
    reason instead of emitting bad rows.
    """
    theta = cf_value(cf)
    lam = unit_multiplier(theta)
    series = linearizer(CubicMap(lam, XComplex(a)), radius_order)
    neg_log_r = -math.log(series.r_hat)
    rows = []
    reason = None
    for n in sorted(n_range):
        try:
            stage = stage_for_convergent(cf, a, n)
        except (PrecisionError, ArithmeticError) as exc:
            reason = f"stage n={n}: {exc}"
            break
        lb = None if stage.degenerate else stage.log_abs_b() / stage.q
        if lb is None or lb < neg_log_r - degeneracy_margin:
            rows.append(ScalingRow(n, stage.q, lb, neg_log_r, None, stage.residual, True))
            continue
        rows.append(
            ScalingRow(n, stage.q, lb, neg_log_r, abs(lb - neg_log_r), stage.residual, False)
        )
    return ScalingTable(tuple(rows), series.r_hat, series.r_hat_err, reason)


@dataclass(frozen=True)
class NobleRow:
    n: int
    theta_value: float
    r_hat: float
    r_hat_err: float
    capture_depth: Optional[int]
    note: Optional[str] = None


@dataclass(frozen=True)
class NobleTable:
    rows: tuple
    r_hat_limit: float
    depth_limit: Optional[int]


def noble_radius_experiment(a, cf: CFExpansion, n_range: Sequence[int],
                            radius_order: int = RADIUS_ORDER,
                            capture_budget: int = 256,
                            rho: float = 0.9) -> NobleTable:
    """Radius and capture depth along all-ones truncations of the rotation number.

    For each n the rotation number is replaced by its noble truncation
    theta_n; rows record r_hat(theta_n, a) and the capture depth there.
    Linearizer failures mark the row instead of aborting.  The reference row
    (theta itself) supplies the limit values.
    """
    a = XComplex(a)

    def measure(theta_cf: CFExpansion):
        lam = unit_multiplier(cf_value(theta_cf))
        f = CubicMap(lam, a)
        series = linearizer(f, radius_order)
        c1, c2 = critical_points(f)
        depth = None
        for cp in (c1, c2):
            res = capture_test(f, series, cp, budget=capture_budget, rho=rho)
            if res.captured and (depth is None or res.landed_at < depth):
                depth = res.landed_at
        return series, depth

    ref_series, ref_depth = measure(cf)
    rows = []
    for n in sorted(n_range):
        sub = noble_truncate(cf, n)
        try:
            series, depth = measure(sub)
        except (PrecisionError, ArithmeticError) as exc:
            rows.append(NobleRow(n, float(cf_value(sub)), float("nan"), float("nan"),
                                 None, note=str(exc)))
            continue
        rows.append(NobleRow(n, float(cf_value(sub)), series.r_hat, series.r_hat_err, depth))
    return NobleTable(tuple(rows), ref_series.r_hat, ref_depth)


def find_component_center(lam, a_guess, k: int, series_order: int = MEMBERSHIP_ORDER,
                          tol: float = 1e-20, max_iter: int = 60) -> XComplex:
    """Parameter where the captured critical orbit hits 0 exactly at step k.

    Secant iteration on h(a) = f^k(c_a) for the critical point tracked
    continuously from a_guess.  The zero is the centre of the surrounding
    capture component.
    """
    lam = XComplex(lam)

    state = {}

    def h(a: XComplex):
        f = CubicMap(lam, a)
        c1, c2 = critical_points(f)
        if "c" in state:
            c = c1 if abs(c1._z - state["c"]) < abs(c2._z - state["c"]) else c2
        else:
            # the captured critical point is the one whose k-th image is smallest
            o1 = f(c1) if k == 1 else _orbit_point(f, c1, k)
            o2 = f(c2) if k == 1 else _orbit_point(f, c2, k)
            c = c1 if abs(o1._z) <= abs(o2._z) else c2
        state["c"] = c._z
        return _orbit_point(f, c, k)

    a0 = XComplex(a_guess)
    a1 = XComplex(a0._z + mpfr("1e-6"))
    h0 = h(a0)
    h1 = h(a1)
    for _ in range(max_iter):
        if abs(h1._z) < tol:
            return a1
        denom = h1._z - h0._z
        if denom == 0:
            break
        a2 = XComplex._wrap(a1._z - h1._z * (a1._z - a0._z) / denom)
        a0, h0 = a1, h1
        a1 = a2
        h1 = h(a1)
    if abs(h1._z) < math.sqrt(tol):
        return a1
    raise ArithmeticError("centre search did not converge")


def _orbit_point(f: CubicMap, z0: XComplex, k: int) -> XComplex:
    z = z0._z
    lam, a = f.lam._z, f.a._z
    for _ in range(k):
        z = (lam + (a + z) * z) * z
    return XComplex._wrap(z)
