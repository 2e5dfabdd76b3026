//! Sandwich covariance for estimating equations, optionally corrected for
//! an estimated disease model.

use nalgebra::DMatrix;

use super::cont::JointSystem;
use crate::disease::DiseaseModelFit;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, inverse, mean_outer, symmetrize};

/// Condition-number ceiling for the bread matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Covariance of `θ̂` from per-subject estimating-function rows `contribs`
/// (n × k) and the mean Jacobian `bread` (k × k).
///
/// When `correction` carries `(E[∂U/∂α], disease fit)`, each row is replaced
/// by its influence-adjusted version
/// `φ_i = U_i - E[∂U/∂α] E[∂V/∂α]⁻¹ V_i`
/// before forming the meat. The result is `Â⁻¹ M Â⁻ᵀ / n`.
pub fn sandwich(
    contribs: &DMatrix<f64>,
    bread: &DMatrix<f64>,
    correction: Option<(&DMatrix<f64>, &DiseaseModelFit)>,
    stage: &str,
) -> Result<DMatrix<f64>> {
    let n = contribs.nrows() as f64;
    let condition = condition_number(bread);
    // NaN must fail this test as well.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            stage: stage.to_string(),
            condition,
            limit: MAX_CONDITION,
        });
    }
    let a_inv = inverse(bread, stage)?;
    let phi = match correction {
        None => contribs.clone(),
        Some((du_dalpha, fit)) => {
            // E[∂V/∂α] = -neg_jacobian, so the adjustment adds V J⁻¹ (∂U/∂α)ᵀ.
            let j_inv = inverse(&fit.neg_jacobian, "disease information")?;
            contribs + &fit.score_contribs * j_inv * du_dalpha.transpose()
        }
    };
    let meat = mean_outer(&phi);
    let cov = &a_inv * meat * a_inv.transpose() / n;
    if cov.iter().all(|v| v.is_finite()) {
        Ok(symmetrize(&cov))
    } else {
        Err(Error::NonFinite(format!("{stage} covariance")))
    }
}

/// Sandwich covariance of the control-function system. Pass `None` for the
/// disease fit when population disease probabilities are known.
pub fn sandwich_covariance(
    system: &JointSystem,
    disease: Option<&DiseaseModelFit>,
) -> Result<DMatrix<f64>> {
    sandwich(
        &system.residual_contribs,
        &system.du_dtheta,
        disease.map(|fit| (&system.du_dalpha, fit)),
        "control-function sandwich",
    )
}
