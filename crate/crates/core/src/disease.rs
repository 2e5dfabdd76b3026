//! Logistic disease model fitted on the case-control sample, and its
//! translation to population disease probabilities.
//!
//! Under case-control sampling the logistic slopes are unaffected and only
//! the intercept moves, by `log[q(1-c) / (c(1-q))]` where `c` is the sample
//! case fraction. [`population_disease_prob`] applies that shift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, expit, max_abs, solve, weighted_crossprod};
use crate::model::CaseControlDesign;

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const STEP_TOL: f64 = 1e-10;
const SCORE_TOL: f64 = 1e-12;
const BOUNDARY_TOL: f64 = 1e-10;
const DIVERGENT_NORM: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseModelFit {
    /// Case-control logistic coefficients.
    pub alpha: DVector<f64>,
    /// Fitted case-control probabilities `expit(x_iᵀα)`.
    pub fitted_cc: DVector<f64>,
    /// Per-subject score rows `x_i (d_i - p_i)`.
    pub score_contribs: DMatrix<f64>,
    /// `n⁻¹ Σ p_i (1 - p_i) x_i x_iᵀ`.
    pub neg_jacobian: DMatrix<f64>,
    pub iterations: usize,
}

fn log_likelihood(eta: &DVector<f64>, d: &DVector<f64>) -> f64 {
    // log(1 + e^η) computed without overflow.
    eta.iter()
        .zip(d.iter())
        .map(|(&e, &di)| di * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()))
        .sum()
}

fn near_boundary(p: &DVector<f64>) -> bool {
    p.iter().any(|v| !(BOUNDARY_TOL..=1.0 - BOUNDARY_TOL).contains(v))
}

/// Mean case-control logistic score `n⁻¹ Σ x_i (d_i - expit(x_iᵀα))`.
pub fn logistic_mean_score(x_dis: &DMatrix<f64>, d: &DVector<f64>, alpha: &DVector<f64>) -> DVector<f64> {
    let resid = d - (x_dis * alpha).map(expit);
    x_dis.transpose() * resid / d.len() as f64
}

/// Maximum-likelihood logistic regression of `d` on `x_dis`, unweighted.
pub fn fit_cc_logistic(x_dis: &DMatrix<f64>, d: &DVector<f64>) -> Result<DiseaseModelFit> {
    let n = d.len();
    if x_dis.nrows() != n {
        return Err(Error::invalid("x_dis and d lengths differ"));
    }
    if x_dis.ncols() == 0 {
        return Err(Error::invalid("disease model needs at least one column"));
    }
    let n_cases = d.iter().filter(|&&v| v == 1.0).count();
    if n_cases == 0 || n_cases == n {
        return Err(Error::DegenerateDesign(
            "disease indicator has a single class".into(),
        ));
    }
    check_full_rank(x_dis, "disease")?;

    let mut alpha = DVector::zeros(x_dis.ncols());
    let mut eta = x_dis * &alpha;
    let mut ll = log_likelihood(&eta, d);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITER {
        let p = eta.map(expit);
        let score = x_dis.transpose() * (d - &p);
        let info = weighted_crossprod(x_dis, &p.map(|v| v * (1.0 - v)));
        if max_abs(&score) / (n as f64) < SCORE_TOL {
            converged = true;
            break;
        }
        let step = solve(&info, &score, "disease model")?;
        iterations += 1;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &alpha + &step * t;
            let eta_c = x_dis * &cand;
            let ll_c = log_likelihood(&eta_c, d);
            // Near the optimum the likelihood is flat to rounding error.
            if ll_c.is_finite() && ll_c >= ll - 1e-12 * (1.0 + ll.abs()) {
                alpha = cand;
                eta = eta_c;
                ll = ll_c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let p = eta.map(expit);
        if near_boundary(&p) && alpha.norm() > DIVERGENT_NORM {
            return Err(Error::Separation);
        }
        if !accepted || max_abs(&step) * t < STEP_TOL {
            converged = true;
            break;
        }
    }

    let p = eta.map(expit);
    if near_boundary(&p) {
        return Err(Error::Separation);
    }
    if !converged {
        return Err(Error::NonConvergence {
            stage: "disease model".into(),
            iterations,
        });
    }

    let resid = d - &p;
    let mut score_contribs = x_dis.clone();
    for (mut row, &r) in score_contribs.row_iter_mut().zip(resid.iter()) {
        row *= r;
    }
    let neg_jacobian = weighted_crossprod(x_dis, &p.map(|v| v * (1.0 - v))) / n as f64;
    Ok(DiseaseModelFit {
        alpha,
        fitted_cc: p,
        score_contribs,
        neg_jacobian,
        iterations,
    })
}

/// Population disease probabilities `expit(x_iᵀα + κ)`.
pub fn population_disease_prob(
    fit: &DiseaseModelFit,
    x_dis: &DMatrix<f64>,
    design: &CaseControlDesign,
) -> DVector<f64> {
    population_prob_at(&fit.alpha, x_dis, design)
}

/// Same as [`population_disease_prob`] for an arbitrary coefficient vector.
pub fn population_prob_at(
    alpha: &DVector<f64>,
    x_dis: &DMatrix<f64>,
    design: &CaseControlDesign,
) -> DVector<f64> {
    let kappa = design.logit_offset();
    (x_dis * alpha).map(|e| expit(e + kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::logit;

    #[test]
    fn intercept_only_recovers_sample_log_odds() {
        let n = 1000;
        let d = DVector::from_fn(n, |i, _| if i < 300 { 1.0 } else { 0.0 });
        let x = DMatrix::from_element(n, 1, 1.0);
        let fit = fit_cc_logistic(&x, &d).unwrap();
        assert!((fit.alpha[0] - logit(0.3)).abs() < 1e-8, "{} {}", fit.alpha[0], logit(0.3));
    }

    #[test]
    fn separated_data_is_rejected() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let d = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(fit_cc_logistic(&x, &d), Err(Error::Separation)));
    }

    #[test]
    fn offset_maps_sample_fraction_to_prevalence() {
        // Intercept-only: the population probability must equal q.
        let n = 1000;
        let d = DVector::from_fn(n, |i, _| if i < 500 { 1.0 } else { 0.0 });
        let x = DMatrix::from_element(n, 1, 1.0);
        let design = CaseControlDesign::from_indicator(0.12, &d).unwrap();
        let fit = fit_cc_logistic(&x, &d).unwrap();
        let p = population_disease_prob(&fit, &x, &design);
        assert!((p[0] - 0.12).abs() < 1e-12);
        assert!((design.logit_offset() - (0.12f64 / 0.88).ln()).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_degenerate() {
        let d = DVector::from_element(5, 1.0);
        let x = DMatrix::from_element(5, 1, 1.0);
        assert!(matches!(
            fit_cc_logistic(&x, &d),
            Err(Error::DegenerateDesign(_))
        ));
    }
}
