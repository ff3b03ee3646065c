"""Campanato/Morrey space machinery on finite weighted point clouds.

Build a space, fit or supply a dominating function, and compute every
coefficient, norm, and operator of the theory, with validators for each
structural hypothesis and experiment drivers for the inequality suite.
"""
from .errors import (
    DegenerateRadii,
    DimensionMismatch,
    InvalidExponent,
    InvalidParams,
    MetricViolation,
    NhsLabError,
    NonMonotoneTheta,
    NonPositiveWeight,
    NotNested,
    NotNormalized,
    SpecError,
    ZeroNorm,
    ZeroNormB,
)
from .geometry import (
    Ball,
    CoefficientValue,
    ball_measure,
    ball_members,
    check_coefficient_chain_bound,
    check_coefficient_inequalities,
    check_doubling_coefficient_bound,
    discrete_coefficient,
    smallest_doubling_ball,
    validate_weak_doubling,
)
from .mmspace import (
    DominatingFunction,
    GeometryProfile,
    PointCloudSpace,
    build_space,
    estimate_geometric_doubling,
    fit_power_lambda,
    make_profile,
    validate_lambda_comparability,
    validate_upper_doubling,
    validate_weak_reverse_doubling,
)
from .operators import (
    KernelSpec,
    OperatorParams,
    check_maximal_morrey_pointwise,
    check_pointwise_domination,
    check_sharp_maximal_estimate,
    dini_integral,
    doubling_maximal,
    make_kernel,
    marcinkiewicz,
    marcinkiewicz_commutator,
    maximal_embedding_constant,
    maximal_p_tau,
    maximal_psi_p_tau,
    sharp_maximal,
    t_lambda,
    validate_kernel,
)
from .spaces import (
    CampanatoNormReport,
    GrowthFunctionPhi,
    RegularityFunctionPsi,
    ball_mean,
    campanato_norm,
    check_mean_jump_bounds,
    equivalence_experiment,
    jn_distribution,
    morrey_norm,
    p_oscillation_norm,
    validate_phi_gdec,
    validate_psi,
)
from .lab import (
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    generate_chains,
    generate_functions,
    generate_space,
    run_experiments,
    two_point_lambda,
    two_point_space,
)

__version__ = "0.1.0"
