//! Simulation harness: scenarios, trials, metrics and Monte-Carlo sweeps.

mod metrics;
mod scenario;
mod sweep;
mod trial;

pub use metrics::{
    aligned_rmse, complexity_fit, median, polynomial_fit, quantile, rmse, BoxStats, Complexity, ComplexityFit,
    PolynomialFit,
};
pub use scenario::{
    build_scenario, ekf_config_for, Band, EstimatorSelection, ReferenceMode, Scenario, World, LANDMARK_STREAM,
    REFERENCE_STREAM,
};
pub use sweep::{run_sweep, Aggregate, SweepOptions, SweepResult, TrialSummary};
pub use trial::{build_ekf, build_observer, run_trial, simulate, TrialRecord, WARM_UP_STEPS};
