//! Discrete-support checks of the odds-aggregation guarantees.
//!
//! The reference minimiser in [`solver`] solves the Lagrangian stationarity
//! system directly, so it shares no code path with the autodiff engine.

mod distribution;
pub mod solver;
mod suites;

pub use distribution::{total_variation, DiscreteDistribution, PerturbationSpec, MAX_PERTURBATION};
pub use solver::{
    minimize_perturbed_js, minimize_perturbed_js_with, optimal_discriminator, perturbed_js_loss, stationarity,
    stationarity_residual, SolverOptions, SolverState,
};
pub use suites::{
    aggregated_perturbation, loglog_slope, lower_bound, max_ratio_deviation, ua_identity_instance, verify_correctness,
    verify_lower_bound, verify_upper_bound, BoundMode, BoundRow, Construction, CorrectnessConfig, LowerBoundConfig,
    TheoryReport, UpperBoundConfig, CSV_HEADER, DEFAULT_DELTAS, MIN_MASS,
};
