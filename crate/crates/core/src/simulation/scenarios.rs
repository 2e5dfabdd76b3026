//! Population generators.
//!
//! Every scenario is a [`ScenarioModel`]: independent covariates, a full
//! design `X = (1, covariates, pairwise interactions)`, a logistic disease
//! model on a subset of the columns of `X`, and an outcome drawn as
//!
//! * identity link: `Y = Xβ + (D - p) Xδ + ε`, `ε ~ N(0, σ²)`;
//! * log link: `Y ~ Poisson(exp{Xβ + D Xδ - log(e^{Xα} p + 1 - p)})` where
//!   `α = δ` unless a separate normalizer is given.
//!
//! The built-in scenarios are the benchmark designs. Their normal
//! distributions are written `N(mean, b)` and `b` is read as a standard
//! deviation unless [`NormalScale::Variance`] is selected.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::expit;
use crate::model::{Dataset, Link};

/// How the second parameter of a normal distribution is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalScale {
    #[default]
    Sd,
    Variance,
}

impl NormalScale {
    pub fn sd(self, b: f64) -> f64 {
        match self {
            NormalScale::Sd => b,
            NormalScale::Variance => b.sqrt(),
        }
    }
}

/// Outcome model for the log-link benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogMeanForm {
    /// Mean model whose population average is exactly `exp(Xβ)`.
    #[default]
    Consistent,
    /// `exp{3 + 0.7X1 + (0.3 + 0.5X1 + 0.5X1X2) D - ν̄}` with `ν̄` built from
    /// `(0.5, 0.3, 0.3, 0.3)`. Its population mean is not `exp(Xβ)`.
    Display,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CovariateSpec {
    /// `N(mean, spread)` with `spread` interpreted by [`NormalScale`].
    Normal { mean: f64, spread: f64 },
    Bernoulli { p: f64 },
    Binomial { trials: u64, p: f64 },
}

/// Selection design used by one control-function fit: a label and the
/// columns of the full design that enter `x_sel`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionVariant {
    pub label: String,
    pub columns: Vec<usize>,
}

impl SelectionVariant {
    pub fn new(label: &str, columns: &[usize]) -> Self {
        Self {
            label: label.to_string(),
            columns: columns.to_vec(),
        }
    }
}

/// Fully specified data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioModel {
    pub name: String,
    pub link: Link,
    pub covariates: Vec<CovariateSpec>,
    /// Pairs of covariate indices whose products are appended to the design.
    #[serde(default)]
    pub interactions: Vec<[usize; 2]>,
    #[serde(default)]
    pub normal_scale: NormalScale,
    /// Columns of the full design entering the disease model.
    pub disease_columns: Vec<usize>,
    pub disease_coef: Vec<f64>,
    /// Outcome mean coefficients used by the generator.
    pub mean_coef: Vec<f64>,
    /// `δ` in the generator.
    pub selection_coef: Vec<f64>,
    /// Log link only: coefficients inside `ν̄` when they differ from `δ`.
    #[serde(default)]
    pub normalizer_coef: Option<Vec<f64>>,
    /// Coefficients the estimators are scored against; defaults to
    /// `mean_coef`.
    #[serde(default)]
    pub true_beta: Option<Vec<f64>>,
    /// Identity link only: the spread of `ε`.
    #[serde(default)]
    pub residual_spread: f64,
    /// Columns of the full design entering `x_mean`; all by default.
    #[serde(default)]
    pub mean_columns: Option<Vec<usize>>,
    pub selection_variants: Vec<SelectionVariant>,
    pub coefficient_names: Vec<String>,
    pub n_cases: usize,
    pub n_controls: usize,
}

/// A generated population with its true disease probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    /// Mean and selection designs hold the full design; the disease design
    /// holds the disease columns.
    pub data: Dataset,
    pub p_true: DVector<f64>,
}

impl Population {
    pub fn prevalence(&self) -> f64 {
        self.data.d.mean()
    }
}

impl ScenarioModel {
    pub fn design_width(&self) -> usize {
        1 + self.covariates.len() + self.interactions.len()
    }

    pub fn mean_columns(&self) -> Vec<usize> {
        self.mean_columns
            .clone()
            .unwrap_or_else(|| (0..self.design_width()).collect())
    }

    pub fn true_beta(&self) -> Vec<f64> {
        self.true_beta.clone().unwrap_or_else(|| {
            let cols = self.mean_columns();
            cols.iter().map(|&c| self.mean_coef[c]).collect()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.design_width();
        let bad = |what: &str| Err(Error::invalid(format!("scenario {}: {what}", self.name)));
        if self.mean_coef.len() != k || self.selection_coef.len() != k {
            return bad("mean and selection coefficients must cover the full design");
        }
        if let Some(a) = &self.normalizer_coef {
            if a.len() != k {
                return bad("normalizer coefficients must cover the full design");
            }
        }
        if self.disease_coef.len() != self.disease_columns.len() {
            return bad("disease coefficients and columns differ in length");
        }
        let in_range = |cols: &[usize]| cols.iter().all(|&c| c < k);
        if !in_range(&self.disease_columns)
            || !self.selection_variants.iter().all(|v| in_range(&v.columns))
            || !in_range(&self.mean_columns())
        {
            return bad("column index out of range");
        }
        if self
            .interactions
            .iter()
            .any(|[a, b]| *a >= self.covariates.len() || *b >= self.covariates.len())
        {
            return bad("interaction refers to an unknown covariate");
        }
        if self.true_beta().len() != self.mean_columns().len() {
            return bad("true_beta length differs from the mean design");
        }
        if self.coefficient_names.len() != self.mean_columns().len() {
            return bad("coefficient_names length differs from the mean design");
        }
        if self.n_cases == 0 || self.n_controls == 0 {
            return bad("need at least one case and one control");
        }
        Ok(())
    }

    fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<DMatrix<f64>> {
        let k = self.design_width();
        let m = self.covariates.len();
        let mut x = DMatrix::zeros(n, k);
        x.column_mut(0).fill(1.0);
        for (j, spec) in self.covariates.iter().enumerate() {
            let mut col = x.column_mut(j + 1);
            match *spec {
                CovariateSpec::Normal { mean, spread } => {
                    let dist = Normal::new(mean, self.normal_scale.sd(spread))
                        .map_err(|e| Error::invalid(e.to_string()))?;
                    col.iter_mut().for_each(|v| *v = dist.sample(rng));
                }
                CovariateSpec::Bernoulli { p } => {
                    let dist = Bernoulli::new(p).map_err(|e| Error::invalid(e.to_string()))?;
                    col.iter_mut()
                        .for_each(|v| *v = if dist.sample(rng) { 1.0 } else { 0.0 });
                }
                CovariateSpec::Binomial { trials, p } => {
                    let dist =
                        Binomial::new(trials, p).map_err(|e| Error::invalid(e.to_string()))?;
                    col.iter_mut().for_each(|v| *v = dist.sample(rng) as f64);
                }
            }
        }
        for (j, [a, b]) in self.interactions.iter().enumerate() {
            let prod = x.column(a + 1).component_mul(&x.column(b + 1));
            x.set_column(1 + m + j, &prod);
        }
        Ok(x)
    }

    /// Draws a population of `n` subjects.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Population> {
        self.validate()?;
        let x = self.draw_covariates(rng, n)?;
        let x_dis = x.select_columns(&self.disease_columns);
        let alpha = DVector::from_column_slice(&self.disease_coef);
        let p = (&x_dis * alpha).map(expit);
        let d = DVector::from_fn(n, |i, _| if rng.random::<f64>() < p[i] { 1.0 } else { 0.0 });

        let beta = DVector::from_column_slice(&self.mean_coef);
        let delta = DVector::from_column_slice(&self.selection_coef);
        let eta = &x * beta;
        let s = &x * &delta;
        let y = match self.link {
            Link::Identity => {
                let eps = Normal::new(0.0, self.normal_scale.sd(self.residual_spread))
                    .map_err(|e| Error::invalid(e.to_string()))?;
                DVector::from_fn(n, |i, _| eta[i] + s[i] * (d[i] - p[i]) + eps.sample(rng))
            }
            Link::Log => {
                let a = self
                    .normalizer_coef
                    .as_ref()
                    .map(|c| &x * DVector::from_column_slice(c))
                    .unwrap_or_else(|| s.clone());
                let mut y = DVector::zeros(n);
                for i in 0..n {
                    let nu_bar = (a[i].exp() * p[i] + 1.0 - p[i]).ln();
                    let mean = (eta[i] + d[i] * s[i] - nu_bar).exp();
                    let dist = Poisson::new(mean).map_err(|e| {
                        Error::invalid(format!("Poisson mean {mean}: {e}"))
                    })?;
                    y[i] = dist.sample(rng);
                }
                y
            }
        };
        let x_mean = x.select_columns(&self.mean_columns());
        let data = Dataset::new(y, d, x_mean, x, x_dis)?;
        Ok(Population { data, p_true: p })
    }
}

/// Built-in benchmark designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// One normal covariate, identity link.
    IdentitySingle,
    /// A normal and a binary covariate with their interaction, identity link.
    IdentityTwoCov,
    /// Two covariates plus an additive genotype, identity link, 500 + 500.
    SnpSettings2,
    /// Poisson outcome, log link.
    LogPoisson,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::IdentitySingle,
        ScenarioKind::IdentityTwoCov,
        ScenarioKind::SnpSettings2,
        ScenarioKind::LogPoisson,
    ];

    pub fn model(self, scale: NormalScale, log_form: LogMeanForm) -> ScenarioModel {
        match self {
            ScenarioKind::IdentitySingle => identity_single(scale),
            ScenarioKind::IdentityTwoCov => identity_two_cov(scale),
            ScenarioKind::SnpSettings2 => snp_settings2(scale),
            ScenarioKind::LogPoisson => log_poisson(scale, log_form),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::IdentitySingle => "identity-single",
            ScenarioKind::IdentityTwoCov => "identity-two-cov",
            ScenarioKind::SnpSettings2 => "snp-settings2",
            ScenarioKind::LogPoisson => "log-poisson",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario `{s}`")))
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// `X1 ~ N(2, 4)`, `logit p = -3.2 + 0.3 X1`,
/// `Y = 50 + 4 X1 + (D - p)(3 + 2 X1) + ε`, `ε ~ N(0, 4)`.
pub fn identity_single(scale: NormalScale) -> ScenarioModel {
    ScenarioModel {
        name: "identity-single".into(),
        link: Link::Identity,
        covariates: vec![CovariateSpec::Normal {
            mean: 2.0,
            spread: 4.0,
        }],
        interactions: vec![],
        normal_scale: scale,
        disease_columns: vec![0, 1],
        disease_coef: vec![-3.2, 0.3],
        mean_coef: vec![50.0, 4.0],
        selection_coef: vec![3.0, 2.0],
        normalizer_coef: None,
        true_beta: None,
        residual_spread: 4.0,
        mean_columns: None,
        selection_variants: vec![
            SelectionVariant::new("cont-cor", &[0, 1]),
            SelectionVariant::new("cont-mis", &[0]),
        ],
        coefficient_names: names(&["Intercept", "X1"]),
        n_cases: 1000,
        n_controls: 1000,
    }
}

/// `X1 ~ N(2, 4)`, `X2 ~ Bernoulli(0.1)`, `logit p = -3.2 + 0.3 X1 + X2`,
/// `Y = 50 + 4X1 + 3X2 + 3X1X2 + (D - p)(3 + 2X1 + 2X2 + 2X1X2) + ε`.
pub fn identity_two_cov(scale: NormalScale) -> ScenarioModel {
    ScenarioModel {
        name: "identity-two-cov".into(),
        link: Link::Identity,
        covariates: vec![
            CovariateSpec::Normal {
                mean: 2.0,
                spread: 4.0,
            },
            CovariateSpec::Bernoulli { p: 0.1 },
        ],
        interactions: vec![[0, 1]],
        normal_scale: scale,
        disease_columns: vec![0, 1, 2],
        disease_coef: vec![-3.2, 0.3, 1.0],
        mean_coef: vec![50.0, 4.0, 3.0, 3.0],
        selection_coef: vec![3.0, 2.0, 2.0, 2.0],
        normalizer_coef: None,
        true_beta: None,
        residual_spread: 4.0,
        mean_columns: None,
        selection_variants: vec![
            SelectionVariant::new("cont-cor", &[0, 1, 2, 3]),
            SelectionVariant::new("cont-mis1", &[0, 1, 2]),
            SelectionVariant::new("cont-mis2", &[0, 1]),
            SelectionVariant::new("cont-mis3", &[0, 2]),
            SelectionVariant::new("cont-mis4", &[0]),
        ],
        coefficient_names: names(&["Intercept", "X1", "X2", "X1X2"]),
        n_cases: 1000,
        n_controls: 1000,
    }
}

/// `Z1 ~ N(0, 4)`, `Z2 ~ Bernoulli(0.2)`, `G ~ Binomial(2, 0.3)`,
/// `logit p = -3.8 + 0.3 Z1 + Z2`,
/// `Y = 3 + 0.7Z1 + 0.5Z2 + 0.3G + (D - p)(1 + 0.5Z1 + 0.3Z2) + ε`,
/// `ε ~ N(0, 4)`, 500 cases and 500 controls.
pub fn snp_settings2(scale: NormalScale) -> ScenarioModel {
    ScenarioModel {
        name: "snp-settings2".into(),
        link: Link::Identity,
        covariates: vec![
            CovariateSpec::Normal {
                mean: 0.0,
                spread: 4.0,
            },
            CovariateSpec::Bernoulli { p: 0.2 },
            CovariateSpec::Binomial { trials: 2, p: 0.3 },
        ],
        interactions: vec![],
        normal_scale: scale,
        disease_columns: vec![0, 1, 2],
        disease_coef: vec![-3.8, 0.3, 1.0],
        mean_coef: vec![3.0, 0.7, 0.5, 0.3],
        selection_coef: vec![1.0, 0.5, 0.3, 0.0],
        normalizer_coef: None,
        true_beta: None,
        residual_spread: 4.0,
        mean_columns: None,
        selection_variants: vec![SelectionVariant::new("cont", &[0, 1, 2, 3])],
        coefficient_names: names(&["Intercept", "Z1", "Z2", "G"]),
        n_cases: 500,
        n_controls: 500,
    }
}

/// `X1 ~ N(1, 0.2)`, `X2 ~ N(1.5, 0.2)`, `logit p = -2.12 + 0.3X1 + X2`,
/// Poisson outcome with `β = (3, 0.7, 0.5, 0.5)` and
/// `δ = (0.5, 0.3, 0.3, 0.3)` on `(1, X1, X2, X1X2)`.
pub fn log_poisson(scale: NormalScale, form: LogMeanForm) -> ScenarioModel {
    let delta = vec![0.5, 0.3, 0.3, 0.3];
    let (mean_coef, selection_coef, normalizer_coef) = match form {
        LogMeanForm::Consistent => (vec![3.0, 0.7, 0.5, 0.5], delta, None),
        LogMeanForm::Display => (
            vec![3.0, 0.7, 0.0, 0.0],
            vec![0.3, 0.5, 0.0, 0.5],
            Some(delta),
        ),
    };
    ScenarioModel {
        name: "log-poisson".into(),
        link: Link::Log,
        covariates: vec![
            CovariateSpec::Normal {
                mean: 1.0,
                spread: 0.2,
            },
            CovariateSpec::Normal {
                mean: 1.5,
                spread: 0.2,
            },
        ],
        interactions: vec![[0, 1]],
        normal_scale: scale,
        disease_columns: vec![0, 1, 2],
        disease_coef: vec![-2.12, 0.3, 1.0],
        mean_coef,
        selection_coef,
        normalizer_coef,
        true_beta: Some(vec![3.0, 0.7, 0.5, 0.5]),
        residual_spread: 0.0,
        mean_columns: None,
        selection_variants: vec![
            SelectionVariant::new("cont-cor", &[0, 1, 2, 3]),
            SelectionVariant::new("cont-mis1", &[0, 1, 2]),
            SelectionVariant::new("cont-mis2", &[0, 1]),
            SelectionVariant::new("cont-mis3", &[0, 2]),
            SelectionVariant::new("cont-mis4", &[0]),
        ],
        coefficient_names: names(&["Intercept", "X1", "X2", "X1X2"]),
        n_cases: 1000,
        n_controls: 1000,
    }
}
