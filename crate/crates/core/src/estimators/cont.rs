//! Control-function estimator.
//!
//! Among sampled subjects the outcome mean is modelled as
//!
//! * identity link: `μ(X) + γ(X) {D - p(X)}` with `μ = x_meanᵀβ`,
//!   `γ = x_selᵀδ`;
//! * log link: `exp{μ(X) + D ν(X) - ν̄(X)}` with `ν = x_selᵀδ` and
//!   `ν̄ = log(e^ν p + 1 - p)`.
//!
//! Both forms average back to `g⁻¹(μ)` over the population disease
//! distribution, so `β` keeps its population meaning. The weighted equation
//! `Σ w_i h1(X_i, D_i) r_i(θ) = 0` is solved for `θ = (β, δ)` with `p`
//! replaced by the disease-model estimate.

use nalgebra::{DMatrix, DVector};

use super::glm::solve_glm;
use super::newton::{newton_solve, NewtonOptions};
use super::sandwich::sandwich_covariance;
use crate::disease::{fit_cc_logistic, population_disease_prob, DiseaseModelFit};
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, condition_number, ols};
use crate::model::{compute_weights, std_errors, CaseControlDesign, Dataset, EstimateResult, EstimatorKind, Link};

/// Clip applied to the log-ratio used for log-link starting values.
const LOG_RATIO_CLIP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContOptions {
    pub newton: NewtonOptions,
    /// Recompute `h1` at every Newton iterate instead of freezing it at the
    /// starting values.
    pub refresh_h1: bool,
}

/// `log(e^s p + 1 - p)`, evaluated without overflow.
pub fn nu_bar(s: f64, p: f64) -> f64 {
    if s > 0.0 {
        s + (p + (1.0 - p) * (-s).exp()).ln()
    } else {
        (p * s.exp_m1()).ln_1p()
    }
}

/// `∂ν̄/∂s = e^s p / (e^s p + 1 - p)`.
pub fn nu_bar_ds(s: f64, p: f64) -> f64 {
    if s > 0.0 {
        p / (p + (1.0 - p) * (-s).exp())
    } else {
        p * s.exp() / (p * s.exp() + 1.0 - p)
    }
}

/// `∂ν̄/∂p = (e^s - 1) / (e^s p + 1 - p)`.
pub fn nu_bar_dp(s: f64, p: f64) -> f64 {
    if s > 0.0 {
        (1.0 - (-s).exp()) / (p + (1.0 - p) * (-s).exp())
    } else {
        s.exp_m1() / (p * s.exp_m1() + 1.0)
    }
}

/// Evaluates the sampled-population mean model at a parameter vector.
struct MeanModel<'a> {
    data: &'a Dataset,
    link: Link,
    p_hat: &'a DVector<f64>,
}

impl<'a> MeanModel<'a> {
    fn new(data: &'a Dataset, link: Link, p_hat: &'a DVector<f64>) -> Result<Self> {
        if p_hat.len() != data.n() {
            return Err(Error::invalid("p_hat length differs from the data"));
        }
        Ok(Self { data, link, p_hat })
    }

    fn q(&self) -> usize {
        self.data.x_mean.ncols()
    }

    fn k(&self) -> usize {
        self.q() + self.data.x_sel.ncols()
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.k() {
            return Err(Error::invalid(format!(
                "θ has length {} but the designs need {}",
                theta.len(),
                self.k()
            )));
        }
        Ok(())
    }

    /// Linear predictors `(x_meanᵀβ, x_selᵀδ)` for every row.
    fn predictors(&self, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let q = self.q();
        let beta = theta.rows(0, q);
        let delta = theta.rows(q, theta.len() - q);
        (&self.data.x_mean * beta, &self.data.x_sel * delta)
    }

    fn mean(&self, eta: f64, s: f64, p: f64, d: f64) -> f64 {
        match self.link {
            Link::Identity => eta + s * (d - p),
            Link::Log => (eta + d * s - nu_bar(s, p)).exp(),
        }
    }

    /// `∂/∂θ g⁻¹(μ̃(X_i, d; θ))`.
    fn mean_gradient(&self, i: usize, eta: f64, s: f64, d: f64) -> DVector<f64> {
        let p = self.p_hat[i];
        let xm = self.data.x_mean.row(i);
        let xs = self.data.x_sel.row(i);
        let (scale, sel_factor) = match self.link {
            Link::Identity => (1.0, d - p),
            Link::Log => (self.mean(eta, s, p, d), d - nu_bar_ds(s, p)),
        };
        let mut g = DVector::zeros(self.k());
        for (j, v) in xm.iter().enumerate() {
            g[j] = scale * v;
        }
        for (j, v) in xs.iter().enumerate() {
            g[self.q() + j] = scale * sel_factor * v;
        }
        g
    }

    /// `∂r_i/∂p` where `r_i = y_i - g⁻¹(μ̃)`.
    fn residual_dp(&self, i: usize, eta: f64, s: f64, d: f64) -> f64 {
        let p = self.p_hat[i];
        match self.link {
            Link::Identity => s,
            Link::Log => self.mean(eta, s, p, d) * nu_bar_dp(s, p),
        }
    }
}

/// Residuals `y_i - g⁻¹(μ̃(X_i, D_i; θ))` of the control-function model.
pub fn cont_residual(
    theta: &DVector<f64>,
    data: &Dataset,
    link: Link,
    p_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    let model = MeanModel::new(data, link, p_hat)?;
    model.check_theta(theta)?;
    let (eta, s) = model.predictors(theta);
    Ok(DVector::from_fn(data.n(), |i, _| {
        data.y[i] - model.mean(eta[i], s[i], p_hat[i], data.d[i])
    }))
}

/// Conditional mean `g⁻¹(μ̃(X_i, d; θ))` for every row at a fixed `d`.
pub fn cont_mean(
    theta: &DVector<f64>,
    data: &Dataset,
    link: Link,
    p_hat: &DVector<f64>,
    d: f64,
) -> Result<DVector<f64>> {
    let model = MeanModel::new(data, link, p_hat)?;
    model.check_theta(theta)?;
    let (eta, s) = model.predictors(theta);
    Ok(DVector::from_fn(data.n(), |i, _| model.mean(eta[i], s[i], p_hat[i], d)))
}

/// Rows `∂/∂θ g⁻¹(μ̃(X_i, D_i; θ))` (n × k).
pub fn cont_mean_gradient(
    theta: &DVector<f64>,
    data: &Dataset,
    link: Link,
    p_hat: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let model = MeanModel::new(data, link, p_hat)?;
    model.check_theta(theta)?;
    let (eta, s) = model.predictors(theta);
    let mut g = DMatrix::zeros(data.n(), model.k());
    for i in 0..data.n() {
        g.set_row(i, &model.mean_gradient(i, eta[i], s[i], data.d[i]).transpose());
    }
    Ok(g)
}

/// Per-row conditional variances `σ²(X_i, 0)` and `σ²(X_i, 1)` used by
/// [`h1_opt`].
///
/// Identity link: `σ²(d) = n⁻¹ Σ_j {y_j - μ_j - γ_j (d - p_j)}²` over all
/// subjects, the same for every row. Log link: the fitted mean itself.
pub fn conditional_variances(
    theta: &DVector<f64>,
    data: &Dataset,
    link: Link,
    p_hat: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m0 = cont_mean(theta, data, link, p_hat, 0.0)?;
    let m1 = cont_mean(theta, data, link, p_hat, 1.0)?;
    match link {
        Link::Identity => {
            let n = data.n() as f64;
            let v0 = (&data.y - &m0).norm_squared() / n;
            let v1 = (&data.y - &m1).norm_squared() / n;
            Ok((
                DVector::from_element(data.n(), v0),
                DVector::from_element(data.n(), v1),
            ))
        }
        Link::Log => Ok((m0, m1)),
    }
}

/// Efficiency-motivated weight matrix (n × k), evaluated at `theta0`:
///
/// `h1_i = ∂/∂θ g⁻¹(μ̃(X_i, D_i)) / Σ_d σ²(X_i, d) w(d) P(D = d | X_i)`.
pub fn h1_opt(
    theta0: &DVector<f64>,
    data: &Dataset,
    link: Link,
    p_hat: &DVector<f64>,
    design: &CaseControlDesign,
) -> Result<DMatrix<f64>> {
    let (v0, v1) = conditional_variances(theta0, data, link, p_hat)?;
    let mut h1 = cont_mean_gradient(theta0, data, link, p_hat)?;
    let (w0, w1) = (design.control_weight(), design.case_weight());
    for (i, mut row) in h1.row_iter_mut().enumerate() {
        let p = p_hat[i];
        let c = v0[i] * w0 * (1.0 - p) + v1[i] * w1 * p;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::DegenerateVariance(i));
        }
        row /= c;
    }
    Ok(h1)
}

/// The stacked control-function estimating system at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSystem {
    pub theta: DVector<f64>,
    pub h1: DMatrix<f64>,
    pub p_hat: DVector<f64>,
    /// Rows `U_i = w_i h1_i r_i` (n × k).
    pub residual_contribs: DMatrix<f64>,
    /// `n⁻¹ Σ ∂U_i/∂θ` with `h1` held fixed (k × k).
    pub du_dtheta: DMatrix<f64>,
    /// `n⁻¹ Σ ∂U_i/∂α` through `p̂` only (k × s).
    pub du_dalpha: DMatrix<f64>,
}

impl JointSystem {
    pub fn evaluate(
        theta: &DVector<f64>,
        h1: &DMatrix<f64>,
        data: &Dataset,
        link: Link,
        p_hat: &DVector<f64>,
        design: &CaseControlDesign,
    ) -> Result<Self> {
        let model = MeanModel::new(data, link, p_hat)?;
        model.check_theta(theta)?;
        if h1.nrows() != data.n() || h1.ncols() != model.k() {
            return Err(Error::invalid("h1 has the wrong shape"));
        }
        let n = data.n();
        let w = compute_weights(design, &data.d)?;
        let (eta, s) = model.predictors(theta);

        let mut contribs = h1.clone();
        let mut grad = DMatrix::zeros(n, model.k());
        let mut h1_alpha = h1.clone();
        for i in 0..n {
            let d = data.d[i];
            let r = data.y[i] - model.mean(eta[i], s[i], p_hat[i], d);
            contribs.row_mut(i).scale_mut(w[i] * r);
            grad.set_row(i, &model.mean_gradient(i, eta[i], s[i], d).transpose());
            let p = p_hat[i];
            let dr_dalpha = model.residual_dp(i, eta[i], s[i], d) * p * (1.0 - p);
            h1_alpha.row_mut(i).scale_mut(w[i] * dr_dalpha);
        }
        if !contribs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("control-function residual".into()));
        }
        let mut h1w = h1.clone();
        for (mut row, &wi) in h1w.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let du_dtheta = -(h1w.transpose() * grad) / n as f64;
        let du_dalpha = h1_alpha.transpose() * &data.x_dis / n as f64;
        Ok(Self {
            theta: theta.clone(),
            h1: h1.clone(),
            p_hat: p_hat.clone(),
            residual_contribs: contribs,
            du_dtheta,
            du_dalpha,
        })
    }

    /// `n⁻¹ Σ U_i`.
    pub fn mean_residual(&self) -> DVector<f64> {
        self.residual_contribs.row_sum().transpose() / self.residual_contribs.nrows() as f64
    }
}

/// Starting values: `β0` from IPW, `δ0` from class-specific regressions of
/// `y` on `x_mean` whose contrast is projected onto `x_sel`.
pub fn cont_start_values(
    data: &Dataset,
    link: Link,
    design: &CaseControlDesign,
) -> Result<DVector<f64>> {
    let w = compute_weights(design, &data.d)?;
    let (beta0, _) = solve_glm(&data.x_mean, &data.y, &w, link, "IPW start")?;
    let delta0 = selection_start(data, link)
        .unwrap_or_else(|_| DVector::zeros(data.x_sel.ncols()));
    let q = beta0.len();
    Ok(DVector::from_fn(q + delta0.len(), |j, _| {
        if j < q {
            beta0[j]
        } else {
            delta0[j - q]
        }
    }))
}

fn selection_start(data: &Dataset, link: Link) -> Result<DVector<f64>> {
    let class_fit = |class: f64| -> Result<DVector<f64>> {
        let rows: Vec<usize> = (0..data.n()).filter(|&i| data.d[i] == class).collect();
        let x = data.x_mean.select_rows(&rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y[i]));
        match link {
            Link::Identity => ols(&x, &y, "class-specific mean"),
            Link::Log => {
                let ones = DVector::from_element(rows.len(), 1.0);
                solve_glm(&x, &y, &ones, Link::Log, "class-specific mean").map(|f| f.0)
            }
        }
    };
    let b1 = class_fit(1.0)?;
    let b0 = class_fit(0.0)?;
    let mut contrast = &data.x_mean * (b1 - b0);
    if link == Link::Log {
        contrast.apply(|v| *v = v.clamp(-LOG_RATIO_CLIP, LOG_RATIO_CLIP));
    }
    ols(&data.x_sel, &contrast, "selection start")
}

/// Fits the control-function estimator with a disease model estimated from
/// the same sample, and returns `(β, δ)` with a sandwich covariance that
/// accounts for the estimated disease probabilities.
pub fn fit_cont(
    data: &Dataset,
    link: Link,
    design: &CaseControlDesign,
    opts: &ContOptions,
) -> Result<EstimateResult> {
    let dfit = fit_cc_logistic(&data.x_dis, &data.d)?;
    let p_hat = population_disease_prob(&dfit, &data.x_dis, design);
    let mut fit = solve_cont(data, link, design, &p_hat, Some(&dfit), opts)?;
    fit.alpha = Some(dfit.alpha);
    Ok(fit)
}

/// Control-function fit with known population disease probabilities `p`.
/// The covariance then carries no disease-model correction.
pub fn fit_cont_known_p(
    data: &Dataset,
    link: Link,
    design: &CaseControlDesign,
    p: &DVector<f64>,
    opts: &ContOptions,
) -> Result<EstimateResult> {
    if p.len() != data.n() || p.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::invalid("known disease probabilities must lie in (0, 1)"));
    }
    solve_cont(data, link, design, p, None, opts)
}

fn solve_cont(
    data: &Dataset,
    link: Link,
    design: &CaseControlDesign,
    p_hat: &DVector<f64>,
    dfit: Option<&DiseaseModelFit>,
    opts: &ContOptions,
) -> Result<EstimateResult> {
    data.check_link(link)?;
    if data.x_sel.ncols() == 0 {
        return Err(Error::invalid("x_sel needs at least one column"));
    }
    check_full_rank(&data.x_mean, "mean")?;
    check_full_rank(&data.x_sel, "selection")?;
    let w = compute_weights(design, &data.d)?;
    let theta0 = cont_start_values(data, link, design)?;
    let frozen = h1_opt(&theta0, data, link, p_hat, design)?;
    let n = data.n() as f64;

    let weight_for = |theta: &DVector<f64>| -> Result<DMatrix<f64>> {
        if opts.refresh_h1 {
            h1_opt(theta, data, link, p_hat, design)
        } else {
            Ok(frozen.clone())
        }
    };
    let residual = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let h1 = weight_for(theta)?;
        let r = cont_residual(theta, data, link, p_hat)?;
        Ok(h1.transpose() * r.component_mul(&w) / n)
    };
    let jacobian = |theta: &DVector<f64>| -> Result<DMatrix<f64>> {
        let h1 = weight_for(theta)?;
        Ok(JointSystem::evaluate(theta, &h1, data, link, p_hat, design)?.du_dtheta)
    };
    let out = newton_solve(residual, jacobian, &theta0, &opts.newton, "control-function")?;

    let h1 = weight_for(&out.theta)?;
    let system = JointSystem::evaluate(&out.theta, &h1, data, link, p_hat, design)?;
    let covariance = sandwich_covariance(&system, dfit)?;
    let q = data.x_mean.ncols();
    Ok(EstimateResult {
        kind: EstimatorKind::Cont,
        beta: out.theta.rows(0, q).into_owned(),
        delta: Some(out.theta.rows(q, out.theta.len() - q).into_owned()),
        alpha: None,
        disease_coef: None,
        std_errors: std_errors(&covariance),
        covariance,
        converged: true,
        iterations: out.iterations,
        jacobian_condition: Some(condition_number(&system.du_dtheta)),
    })
}
