//! Estimators for the secondary-outcome mean model.

pub mod cont;
pub mod glm;
pub mod ipw;
pub mod naive;
pub mod newton;
pub mod sandwich;

pub use cont::{
    conditional_variances, cont_mean, cont_mean_gradient, cont_residual, cont_start_values, fit_cont,
    fit_cont_known_p, h1_opt, nu_bar, nu_bar_dp, nu_bar_ds, ContOptions, JointSystem,
};
pub use ipw::fit_ipw;
pub use naive::{fit_dind, fit_naive, fit_pooled};
pub use newton::{newton_solve, NewtonOptions, NewtonOutcome};
pub use sandwich::{sandwich, sandwich_covariance};

use crate::error::Result;
use crate::model::{CaseControlDesign, Dataset, EstimateResult, EstimatorKind, Link};

/// Dispatches to the estimator named by `kind` with default options.
pub fn fit(
    kind: EstimatorKind,
    data: &Dataset,
    link: Link,
    design: &CaseControlDesign,
) -> Result<EstimateResult> {
    match kind {
        EstimatorKind::Ipw => fit_ipw(data, link, design),
        EstimatorKind::Cont => fit_cont(data, link, design, &ContOptions::default()),
        EstimatorKind::Pooled | EstimatorKind::Dind => fit_naive(data, link, kind),
    }
}
