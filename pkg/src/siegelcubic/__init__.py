"""Numerical laboratory for cubic polynomials lam*z + a*z^2 + z^3 with an
indifferent fixed point at the origin: continued-fraction rotation numbers,
Siegel linearization and conformal radius, parabolic-stage coefficients and
petal probes, and parameter-plane rasters.
"""

from .numerics import (
    DEFAULT_PRECISION,
    Jet,
    PrecisionError,
    RangeError,
    XComplex,
    configure,
    cubic_jet,
    eps,
    get_precision,
    jet_compose,
    jet_mul,
)
from .rotation import (
    GOLDEN,
    CFExpansion,
    Convergent,
    brjuno_sum,
    cf_value,
    convergents,
    is_bounded_type,
    noble_truncate,
    parse_cf,
    unit_multiplier,
)
from .cubic import (
    CubicMap,
    GreenResult,
    LyapunovResult,
    OrbitRecord,
    critical_points,
    green,
    iterate,
    lyapunov,
)
from .siegel import (
    CaptureResult,
    DegenerateSeriesError,
    LinearizationSeries,
    capture_test,
    conformal_radius,
    functional_equation_residual,
    linearizer,
    phi_eval,
    radius_log_fn,
    u_along_path,
)
from .parabolic import (
    ContourError,
    JellouliStat,
    NormalFormError,
    ParabolicStage,
    PetalProbe,
    WindingReport,
    b_n_compute,
    count_fixed_points,
    count_roots_on_contour,
    jellouli_stat,
    nondegenerate_test,
    petal_probe,
    stage_for_convergent,
    winding_experiment,
)
from .bifurc import (
    GridSpec,
    Raster,
    bn_scaling_experiment,
    classify_raster,
    find_component_center,
    lyapunov_raster,
    noble_radius_experiment,
    slice_current_density,
)

__version__ = "0.1.0"
