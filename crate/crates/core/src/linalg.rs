//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a design is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Ratio of largest to smallest singular value.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn check_full_rank(x: &DMatrix<f64>, name: &str) -> Result<()> {
    if x.ncols() == 0 {
        return Ok(());
    }
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient(name.to_string()));
    }
    let sv = x.singular_values();
    // NaN must fail this test as well.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(sv.min() > RANK_TOL * sv.max()) {
        return Err(Error::RankDeficient(name.to_string()));
    }
    Ok(())
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, stage: &str) -> Result<DVector<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularJacobian(stage.to_string()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularJacobian(stage.to_string()))
    }
}

pub fn inverse(a: &DMatrix<f64>, stage: &str) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularJacobian(stage.to_string()))
}

/// Least-squares coefficients of `y` on `x`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, name: &str) -> Result<DVector<f64>> {
    check_full_rank(x, name)?;
    x.clone()
        .svd(true, true)
        .solve(y, 0.0)
        .map_err(|e| Error::invalid(format!("{name}: {e}")))
}

/// `Σ_i w_i x_i x_iᵀ` over the rows of `x`.
pub fn weighted_crossprod(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    x.transpose() * xw
}

/// Mean outer product `n⁻¹ Σ_i u_i u_iᵀ` of the rows of `u`.
pub fn mean_outer(u: &DMatrix<f64>) -> DMatrix<f64> {
    u.transpose() * u / u.nrows() as f64
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
