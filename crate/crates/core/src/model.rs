//! Shared data types: links, sampling design, datasets and fit results.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Link between the linear predictor and the conditional mean of the
/// secondary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Log,
}

impl Link {
    /// Inverse link applied to a linear predictor.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
        }
    }

    /// Derivative of the inverse link.
    pub fn inverse_derivative(self, eta: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => eta.exp(),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Log => "log",
        })
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            other => Err(Error::invalid(format!("unknown link `{other}`"))),
        }
    }
}

/// Elementwise inverse link.
pub fn link_inverse(link: Link, eta: &DVector<f64>) -> DVector<f64> {
    eta.map(|e| link.inverse(e))
}

/// Case-control sampling design: population prevalence and class sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseControlDesign {
    prevalence: f64,
    n_cases: usize,
    n_controls: usize,
}

impl CaseControlDesign {
    pub fn new(prevalence: f64, n_cases: usize, n_controls: usize) -> Result<Self> {
        if !(prevalence > 0.0 && prevalence < 1.0) {
            return Err(Error::invalid(format!(
                "prevalence must lie strictly between 0 and 1, got {prevalence}"
            )));
        }
        if n_cases == 0 || n_controls == 0 {
            return Err(Error::DegenerateDesign(format!(
                "need at least one case and one control (got {n_cases} cases, {n_controls} controls)"
            )));
        }
        Ok(Self {
            prevalence,
            n_cases,
            n_controls,
        })
    }

    /// Design whose class sizes are read off a 0/1 disease indicator.
    pub fn from_indicator(prevalence: f64, d: &DVector<f64>) -> Result<Self> {
        let n_cases = d.iter().filter(|&&v| v == 1.0).count();
        Self::new(prevalence, n_cases, d.len() - n_cases)
    }

    pub fn prevalence(&self) -> f64 {
        self.prevalence
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn n(&self) -> usize {
        self.n_cases + self.n_controls
    }

    /// Fraction of cases in the sample.
    pub fn case_fraction(&self) -> f64 {
        self.n_cases as f64 / self.n() as f64
    }

    /// Weight attached to every case, `q n / n1`.
    pub fn case_weight(&self) -> f64 {
        self.prevalence * self.n() as f64 / self.n_cases as f64
    }

    /// Weight attached to every control, `(1 - q) n / n0`.
    pub fn control_weight(&self) -> f64 {
        (1.0 - self.prevalence) * self.n() as f64 / self.n_controls as f64
    }

    /// Weight for disease status `d` (0 or 1).
    pub fn weight(&self, d: f64) -> f64 {
        if d == 1.0 {
            self.case_weight()
        } else {
            self.control_weight()
        }
    }

    /// Logit shift mapping case-control disease odds to population odds.
    pub fn logit_offset(&self) -> f64 {
        let q = self.prevalence;
        let c = self.case_fraction();
        (q * (1.0 - c) / (c * (1.0 - q))).ln()
    }
}

/// Per-subject sampling weights. Class counts in `d` must agree with the
/// design.
pub fn compute_weights(design: &CaseControlDesign, d: &DVector<f64>) -> Result<DVector<f64>> {
    let n_cases = d.iter().filter(|&&v| v == 1.0).count();
    if d.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("disease indicator must be 0 or 1"));
    }
    if n_cases != design.n_cases() || d.len() - n_cases != design.n_controls() {
        return Err(Error::invalid(format!(
            "indicator has {} cases and {} controls but the design expects {} and {}",
            n_cases,
            d.len() - n_cases,
            design.n_cases(),
            design.n_controls()
        )));
    }
    let (w1, w0) = (design.case_weight(), design.control_weight());
    Ok(d.map(|v| if v == 1.0 { w1 } else { w0 }))
}

/// A case-control sample with the three design matrices used by the
/// estimators: the mean model, the selection-bias function and the disease
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    pub x_mean: DMatrix<f64>,
    pub x_sel: DMatrix<f64>,
    pub x_dis: DMatrix<f64>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        d: DVector<f64>,
        x_mean: DMatrix<f64>,
        x_sel: DMatrix<f64>,
        x_dis: DMatrix<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        for (name, rows) in [
            ("d", d.len()),
            ("x_mean", x_mean.nrows()),
            ("x_sel", x_sel.nrows()),
            ("x_dis", x_dis.nrows()),
        ] {
            if rows != n {
                return Err(Error::invalid(format!(
                    "{name} has {rows} rows but y has {n}"
                )));
            }
        }
        if x_mean.ncols() == 0 {
            return Err(Error::invalid("x_mean needs at least one column"));
        }
        if let Some(v) = d.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!(
                "disease indicator must be 0 or 1, found {v}"
            )));
        }
        let finite = y.iter().all(|v| v.is_finite())
            && x_mean.iter().all(|v| v.is_finite())
            && x_sel.iter().all(|v| v.is_finite())
            && x_dis.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Self {
            y,
            d,
            x_mean,
            x_sel,
            x_dis,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_cases(&self) -> usize {
        self.d.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn n_controls(&self) -> usize {
        self.n() - self.n_cases()
    }

    /// Checks outcome support for the given link.
    pub fn check_link(&self, link: Link) -> Result<()> {
        if link == Link::Log {
            if let Some(i) = self.y.iter().position(|&v| v < 0.0) {
                return Err(Error::invalid(format!(
                    "log link needs a non-negative outcome; row {i} has {}",
                    self.y[i]
                )));
            }
        }
        Ok(())
    }

    /// Row subset, in the order given.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            d: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.d[i])),
            x_mean: self.x_mean.select_rows(rows),
            x_sel: self.x_sel.select_rows(rows),
            x_dis: self.x_dis.select_rows(rows),
        }
    }

    /// Copy with the selection design restricted to the given columns.
    pub fn with_selection_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.x_sel.ncols()) {
            return Err(Error::invalid(format!(
                "selection column {c} out of range ({} columns)",
                self.x_sel.ncols()
            )));
        }
        Ok(Self {
            x_sel: self.x_sel.select_columns(cols),
            ..self.clone()
        })
    }

    /// Copy with `column` appended to all three designs.
    pub fn with_appended_column(&self, column: &DVector<f64>) -> Result<Self> {
        if column.len() != self.n() {
            return Err(Error::invalid("appended column length mismatch"));
        }
        let append = |m: &DMatrix<f64>| {
            let k = m.ncols();
            let mut out = m.clone().insert_column(k, 0.0);
            out.set_column(k, column);
            out
        };
        Ok(Self {
            x_mean: append(&self.x_mean),
            x_sel: append(&self.x_sel),
            x_dis: append(&self.x_dis),
            ..self.clone()
        })
    }
}

/// Estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Inverse probability weighting.
    Ipw,
    /// Control-function estimating equation.
    Cont,
    /// Unweighted regression ignoring disease status.
    Pooled,
    /// Unweighted regression with disease status as a covariate.
    Dind,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ipw => "IPW",
            EstimatorKind::Cont => "cont",
            EstimatorKind::Pooled => "pooled",
            EstimatorKind::Dind => "Dind",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipw" => Ok(EstimatorKind::Ipw),
            "cont" => Ok(EstimatorKind::Cont),
            "pooled" => Ok(EstimatorKind::Pooled),
            "dind" => Ok(EstimatorKind::Dind),
            other => Err(Error::invalid(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Output of any estimator.
///
/// `covariance` and `std_errors` cover the reported parameter vector: `beta`
/// for IPW and pooled, `(beta, delta)` for cont, and `(beta, disease_coef)`
/// for Dind. The mean-model block always comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub kind: EstimatorKind,
    pub beta: DVector<f64>,
    pub delta: Option<DVector<f64>>,
    pub alpha: Option<DVector<f64>>,
    pub disease_coef: Option<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub jacobian_condition: Option<f64>,
}

impl EstimateResult {
    /// Standard errors of the mean-model coefficients.
    pub fn beta_std_errors(&self) -> DVector<f64> {
        self.std_errors.rows(0, self.beta.len()).into_owned()
    }
}

pub(crate) fn std_errors(cov: &DMatrix<f64>) -> DVector<f64> {
    cov.diagonal().map(|v| v.max(0.0).sqrt())
}
