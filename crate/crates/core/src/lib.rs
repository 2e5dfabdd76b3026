//! Estimation of covariate effects on a secondary outcome in case-control
//! samples.
//!
//! The sample over-represents diseased subjects, so naive regressions of the
//! secondary outcome are biased. Two families of estimators are provided:
//!
//! * inverse probability weighting ([`estimators::fit_ipw`]), and
//! * a control-function estimator ([`estimators::fit_cont`]) that models the
//!   mean of the outcome jointly with a selection-bias function and solves a
//!   weighted estimating equation. It is typically far more efficient than
//!   IPW, stays consistent when the selection-bias function is misspecified,
//!   and reduces to IPW when every design is saturated.
//!
//! A Monte Carlo harness ([`simulation`]) reproduces the benchmark designs,
//! and [`cli`] wires everything to a command-line tool.

pub mod cli;
pub mod disease;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{CaseControlDesign, Dataset, EstimateResult, EstimatorKind, Link};
