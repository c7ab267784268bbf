"""Continuous collective readout of a qubit register.

Simulates diffusive z-basis measurement records for an n-qubit register,
with open-loop permutation controls that speed up the collapse onto a
basis state, and provides the analytic rates, bounds, and ensemble
statistics needed to quantify that speed-up.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .registers import (
    NORMALIZATION_TOL,
    DiagonalState,
    Permutation,
    ZObservable,
    apply_permutation,
    compose,
    hamming_distance,
    hamming_weight,
    invert,
    leading_rotation,
    sample_uniform_permutation,
    z_eigenvalue,
    z_table,
)
from .sde import (
    DEFAULT_STOP_EPSILON,
    INTEGRATORS,
    IntegrationError,
    RecordAccumulator,
    SimulationParams,
    StepIncrements,
    TrajectoryResult,
    euler_step,
    exact_step,
    generate_increments,
    simulate_trajectory,
    trajectory_control_rng,
    trajectory_noise_rng,
)
from .policies import (
    POLICY_KINDS,
    ControlLog,
    ControlPolicy,
    fixed_cycle_policy,
    h_order,
    h_order_targets,
    h_ordering_policy,
    no_control,
    policy_step,
    random_permutation_policy,
    read_cycle_file,
    retrodict,
)
from .theory import (
    ENUMERATION_MAX_QUBITS,
    RATE_MODES,
    IdentityReport,
    RateEstimate,
    SpeedupBounds,
    all_permutation_images,
    flat_tail_permuted_rate,
    flat_tail_state,
    h_ordering_speedup_bounds,
    linear_trajectory_state,
    log_infidelity_rate,
    mean_random_hamming_distance,
    mean_time_nofb,
    nofb_log_infidelity,
    permutation_averaged_rate,
    permutation_sum_identities,
    random_permutation_speedup_bounds,
    two_level_permuted_rate,
    two_level_state,
    zsum_bounds,
)
from .ensemble import (
    EnsembleStats,
    MeanTimeFit,
    RunsTestResult,
    ScalingFit,
    SpeedupEstimate,
    SweepPoint,
    asymptotic_speedup,
    auto_slope_window,
    default_epsilon_grid,
    fit_ln_delta_slope,
    fit_speedup_scaling,
    mc_permuted_step_rate,
    regression_mean_time,
    run_ensemble,
    runs_test,
    speedup_bounds_for_policy,
    speedup_fixed_epsilon,
    speedup_scaling_sweep,
)

__all__ = [
    "__version__",
    "NORMALIZATION_TOL",
    "DiagonalState",
    "Permutation",
    "ZObservable",
    "apply_permutation",
    "compose",
    "hamming_distance",
    "hamming_weight",
    "invert",
    "leading_rotation",
    "sample_uniform_permutation",
    "z_eigenvalue",
    "z_table",
    "DEFAULT_STOP_EPSILON",
    "INTEGRATORS",
    "IntegrationError",
    "RecordAccumulator",
    "SimulationParams",
    "StepIncrements",
    "TrajectoryResult",
    "euler_step",
    "exact_step",
    "generate_increments",
    "simulate_trajectory",
    "trajectory_control_rng",
    "trajectory_noise_rng",
    "POLICY_KINDS",
    "ControlLog",
    "ControlPolicy",
    "fixed_cycle_policy",
    "h_order",
    "h_order_targets",
    "h_ordering_policy",
    "no_control",
    "policy_step",
    "random_permutation_policy",
    "read_cycle_file",
    "retrodict",
    "ENUMERATION_MAX_QUBITS",
    "RATE_MODES",
    "IdentityReport",
    "RateEstimate",
    "SpeedupBounds",
    "all_permutation_images",
    "flat_tail_permuted_rate",
    "flat_tail_state",
    "h_ordering_speedup_bounds",
    "linear_trajectory_state",
    "log_infidelity_rate",
    "mean_random_hamming_distance",
    "mean_time_nofb",
    "nofb_log_infidelity",
    "permutation_averaged_rate",
    "permutation_sum_identities",
    "random_permutation_speedup_bounds",
    "two_level_permuted_rate",
    "two_level_state",
    "zsum_bounds",
    "EnsembleStats",
    "MeanTimeFit",
    "RunsTestResult",
    "ScalingFit",
    "SpeedupEstimate",
    "SweepPoint",
    "asymptotic_speedup",
    "auto_slope_window",
    "default_epsilon_grid",
    "fit_ln_delta_slope",
    "fit_speedup_scaling",
    "mc_permuted_step_rate",
    "regression_mean_time",
    "run_ensemble",
    "runs_test",
    "speedup_bounds_for_policy",
    "speedup_fixed_epsilon",
    "speedup_scaling_sweep",
]
