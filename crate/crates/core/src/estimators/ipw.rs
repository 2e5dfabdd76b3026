//! Inverse probability weighting.

use super::glm::fit_glm;
use crate::error::Result;
use crate::linalg::condition_number;
use crate::model::{compute_weights, std_errors, CaseControlDesign, Dataset, EstimateResult, EstimatorKind, Link};

/// Inverse-probability-weighted estimator: the weighted GLM equation in
/// `x_mean` alone. Weights are fixed by design, so no disease-model
/// correction enters its covariance.
pub fn fit_ipw(data: &Dataset, link: Link, design: &CaseControlDesign) -> Result<EstimateResult> {
    data.check_link(link)?;
    let w = compute_weights(design, &data.d)?;
    let fit = fit_glm(&data.x_mean, &data.y, &w, link, "IPW")?;
    Ok(EstimateResult {
        kind: EstimatorKind::Ipw,
        std_errors: std_errors(&fit.covariance),
        beta: fit.coef,
        delta: None,
        alpha: None,
        disease_coef: None,
        covariance: fit.covariance,
        converged: true,
        iterations: fit.iterations,
        jacobian_condition: Some(condition_number(&fit.jacobian)),
    })
}
