//! Unweighted regressions that ignore the sampling design. Both are biased
//! in general and serve as reference points.

use nalgebra::DVector;

use super::glm::fit_glm;
use crate::error::{Error, Result};
use crate::linalg::condition_number;
use crate::model::{std_errors, Dataset, EstimateResult, EstimatorKind, Link};

/// Pooled regression of `y` on `x_mean`, or with `kind = Dind` on
/// `(x_mean, d)`. The disease coefficient of Dind is reported in
/// `disease_coef` and occupies the last entry of the covariance.
pub fn fit_naive(data: &Dataset, link: Link, kind: EstimatorKind) -> Result<EstimateResult> {
    data.check_link(link)?;
    let x = match kind {
        EstimatorKind::Pooled => data.x_mean.clone(),
        EstimatorKind::Dind => {
            let q = data.x_mean.ncols();
            let mut x = data.x_mean.clone().insert_column(q, 0.0);
            x.set_column(q, &data.d);
            x
        }
        other => {
            return Err(Error::invalid(format!(
                "{other} is not a naive estimator"
            )))
        }
    };
    let ones = DVector::from_element(data.n(), 1.0);
    let fit = fit_glm(&x, &data.y, &ones, link, &kind.to_string())?;
    let q = data.x_mean.ncols();
    let disease_coef = (kind == EstimatorKind::Dind).then(|| fit.coef[q]);
    Ok(EstimateResult {
        kind,
        beta: fit.coef.rows(0, q).into_owned(),
        delta: None,
        alpha: None,
        disease_coef,
        std_errors: std_errors(&fit.covariance),
        covariance: fit.covariance,
        converged: true,
        iterations: fit.iterations,
        jacobian_condition: Some(condition_number(&fit.jacobian)),
    })
}

/// Pooled fit, unused design matrices ignored.
pub fn fit_pooled(data: &Dataset, link: Link) -> Result<EstimateResult> {
    fit_naive(data, link, EstimatorKind::Pooled)
}

pub fn fit_dind(data: &Dataset, link: Link) -> Result<EstimateResult> {
    fit_naive(data, link, EstimatorKind::Dind)
}

