//! Weighted generalized linear model estimating equation
//! `Σ w_i x_i (y_i - g⁻¹(x_iᵀβ)) = 0` with a robust sandwich covariance.
//!
//! With unit weights this is ordinary least squares (identity link) or the
//! Poisson quasi-likelihood (log link).

use nalgebra::{DMatrix, DVector};

use super::newton::{newton_solve, NewtonOptions};
use super::sandwich::sandwich;
use crate::error::Result;
use crate::linalg::{check_full_rank, ols};
use crate::model::Link;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coef: DVector<f64>,
    /// Estimated covariance of `coef`.
    pub covariance: DMatrix<f64>,
    /// Per-subject estimating-function rows `w_i x_i (y_i - μ_i)`.
    pub contribs: DMatrix<f64>,
    /// Mean derivative of the estimating function.
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
}

fn contributions(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    link: Link,
    beta: &DVector<f64>,
) -> DMatrix<f64> {
    let eta = x * beta;
    let mut u = x.clone();
    for (i, mut row) in u.row_iter_mut().enumerate() {
        row *= w[i] * (y[i] - link.inverse(eta[i]));
    }
    u
}

fn mean_jacobian(x: &DMatrix<f64>, w: &DVector<f64>, link: Link, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= -w[i] * link.inverse_derivative(eta[i]);
    }
    x.transpose() * xw / x.nrows() as f64
}

/// Solves the estimating equation only.
pub fn solve_glm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    link: Link,
    stage: &str,
) -> Result<(DVector<f64>, usize)> {
    check_full_rank(x, stage)?;
    let n = x.nrows() as f64;
    let start = match link {
        Link::Identity => DVector::zeros(x.ncols()),
        Link::Log => ols(x, &y.map(|v| (v + 0.5).ln()), stage)?,
    };
    let out = newton_solve(
        |b| Ok(contributions(x, y, w, link, b).row_sum().transpose() / n),
        |b| Ok(mean_jacobian(x, w, link, b)),
        &start,
        &NewtonOptions::default(),
        stage,
    )?;
    Ok((out.theta, out.iterations))
}

/// Solves the estimating equation and computes its sandwich covariance.
pub fn fit_glm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    link: Link,
    stage: &str,
) -> Result<GlmFit> {
    let (coef, iterations) = solve_glm(x, y, w, link, stage)?;
    let contribs = contributions(x, y, w, link, &coef);
    let jacobian = mean_jacobian(x, w, link, &coef);
    let covariance = sandwich(&contribs, &jacobian, None, stage)?;
    Ok(GlmFit {
        coef,
        covariance,
        contribs,
        jacobian,
        iterations,
    })
}
