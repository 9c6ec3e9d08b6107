"""Spectral geometry of circle-invariant metrics on line bundles over P^1."""

from .profiles import (
    BaseProfile,
    ContinuousFamily,
    FamilyDiagnostics,
    MetricProfile,
    blend_metrics,
    chi_dyadic,
    chi_linear,
    concavity_report,
    cusp_profile,
    default_ugrid,
    diagnostics,
    dynamical_log_gradient,
    fixed_point_step_gradient,
    interpolate,
    log_bound_check,
    make_canonical,
    make_dynamical,
    make_fs_base,
    make_fubini_study,
    make_pnorm,
    make_tx_pnorm_base,
    scale_base,
)
from .assembly import (
    Discretization,
    ModeOperator,
    divergence_diagnostic,
    green_identity_check,
    reduce_mode,
)
from .eigen import Spectrum, merge, solve_mode, solve_spectrum
from .heat import (
    HeatPropagator,
    ThetaSeries,
    duhamel_check,
    fit_expansion,
    heat_apply,
    resolvent_convergence,
    semigroup_convergence,
    theta,
    tx_variation_bound,
    variation_bounds,
)
from .zeta import (
    ZetaReport,
    family_rows,
    mellin_zeta,
    torsion_limit,
    zeta_at,
    zeta_continuation,
    zeta_prime0,
    zeta_report,
    zeta_tail,
)
from .opcalc import (
    FiniteOperator,
    metric_distortion,
    norm_inequality_suite,
    nuclear_norm,
    operator_norm,
    singular_values,
    trace,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
