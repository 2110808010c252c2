"""Contraction rates of pure jump Markov particle systems.

The package computes Wasserstein contraction (coarse Ricci) lower bounds for
interacting particle systems whose coordinates perform pure jumps on a finite
or countable site set: exact transport distances and plans, the pair-drift
functional driving the coupled dynamics, enumeration engines for the
resulting bounds, closed forms for the standard model families, and coupled
Monte Carlo simulation to confirm the rates empirically.
"""

from .core import (
    Config,
    FiniteMeasure,
    GroundMetric,
    LineBaseMeasure,
    MassMismatchError,
    NumericError,
    ValidationError,
    abs_first_moment,
    cdf_eval,
    check_configuration,
    config_distance,
    masses_match,
)
from .transport import TransportPlan, optimal_plan, wasserstein, wasserstein_line
from .drift import (
    DriftResult,
    drift_classical_bound,
    drift_density_closed_form,
    drift_exact,
    drift_kernel_bound,
)
from .curvature import (
    CouplingRates,
    CurvatureReport,
    JumpKernel,
    SingleSiteKernel,
    bound_single,
    bound_system,
    coupling_rates,
    mean_drift,
)
from .models import (
    AffinePreference,
    AgentsKernel,
    AgentsSpec,
    BirthDeathSpec,
    ComesDownSeries,
    EigenPair,
    FlemingViotKernel,
    FlemingViotSpec,
    HerdThreshold,
    MeanFieldBDKernel,
    MeanFieldBDSpec,
    ModelBound,
    ModifiedBDSpec,
    PowerPreference,
    QuadraticPreference,
    ZeroPreference,
    ZeroRangeKernel,
    ZeroRangeSpec,
    agents_bound,
    bd_bound,
    bd_eigen,
    bd_interior,
    bd_metric,
    build_kernel,
    comes_down_series,
    discrete_curvature,
    fv_bound,
    fv_eigen_bound,
    herd_threshold,
    kernel_family_bound,
    lipschitz_estimate,
    mean_field_bd_bound,
    min_total_preference,
    modified_bd_bound,
    zero_range_bound,
)
from .sim import (
    ContractionFit,
    CoupledTrajectory,
    HerdResult,
    Trajectory,
    contraction_estimate,
    default_grid,
    herd_experiment,
    simulate,
    simulate_coupled,
)
from .config import (
    PACKAGE_VERSION,
    ConfigError,
    RunConfig,
    emit_report,
    expand_rates,
    load_config,
    parse_metric,
    read_measure_csv,
    resolve_model,
    write_measure_csv,
    write_plan_csv,
)

__version__ = PACKAGE_VERSION

__all__ = [
    "AffinePreference",
    "AgentsKernel",
    "AgentsSpec",
    "BirthDeathSpec",
    "ComesDownSeries",
    "Config",
    "ConfigError",
    "ContractionFit",
    "CoupledTrajectory",
    "CouplingRates",
    "CurvatureReport",
    "DriftResult",
    "EigenPair",
    "FiniteMeasure",
    "FlemingViotKernel",
    "FlemingViotSpec",
    "GroundMetric",
    "HerdResult",
    "HerdThreshold",
    "JumpKernel",
    "LineBaseMeasure",
    "MassMismatchError",
    "MeanFieldBDKernel",
    "MeanFieldBDSpec",
    "ModelBound",
    "ModifiedBDSpec",
    "NumericError",
    "PowerPreference",
    "QuadraticPreference",
    "RunConfig",
    "SingleSiteKernel",
    "TransportPlan",
    "Trajectory",
    "ValidationError",
    "ZeroPreference",
    "ZeroRangeKernel",
    "ZeroRangeSpec",
    "abs_first_moment",
    "agents_bound",
    "bd_bound",
    "bd_eigen",
    "bd_interior",
    "bd_metric",
    "bound_single",
    "bound_system",
    "build_kernel",
    "cdf_eval",
    "check_configuration",
    "comes_down_series",
    "config_distance",
    "contraction_estimate",
    "coupling_rates",
    "default_grid",
    "discrete_curvature",
    "drift_classical_bound",
    "drift_density_closed_form",
    "drift_exact",
    "drift_kernel_bound",
    "emit_report",
    "expand_rates",
    "fv_bound",
    "fv_eigen_bound",
    "herd_experiment",
    "herd_threshold",
    "kernel_family_bound",
    "lipschitz_estimate",
    "load_config",
    "masses_match",
    "mean_drift",
    "mean_field_bd_bound",
    "min_total_preference",
    "modified_bd_bound",
    "optimal_plan",
    "parse_metric",
    "read_measure_csv",
    "resolve_model",
    "simulate",
    "simulate_coupled",
    "wasserstein",
    "wasserstein_line",
    "write_measure_csv",
    "write_plan_csv",
]
