//! Monte Carlo evaluation of the estimators on simulated case-control
//! studies.

pub mod checks;
pub mod runner;
pub mod sampling;
pub mod scenarios;
pub mod summary;

pub use checks::{calibration_checks, reference_checks, robustness_checks, CheckOutcome};
pub use runner::{run_replicates, SimulationConfig, DEFAULT_POOL_SIZE};
pub use sampling::sample_case_control;
pub use scenarios::{
    identity_single, identity_two_cov, log_poisson, snp_settings2, CovariateSpec, LogMeanForm,
    NormalScale, Population, ScenarioKind, ScenarioModel, SelectionVariant,
};
pub use summary::{SimulationSummary, SummaryRow, Z_975};
