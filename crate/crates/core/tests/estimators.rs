mod common;

use cfipw::disease::{fit_cc_logistic, population_disease_prob, population_prob_at};
use cfipw::estimators::{
    cont_mean, cont_mean_gradient, cont_residual, cont_start_values, fit_cont, fit_cont_known_p,
    fit_dind, fit_ipw, fit_pooled, h1_opt, newton_solve, nu_bar, nu_bar_dp, nu_bar_ds, sandwich,
    sandwich_covariance, ContOptions, JointSystem, NewtonOptions,
};
use cfipw::simulation::{sample_case_control, ScenarioKind};
use cfipw::simulation::{LogMeanForm, NormalScale};
use cfipw::{CaseControlDesign, Dataset, Error, Link};
use common::{broyden, fd_jacobian, rel_err};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenario_sample(kind: ScenarioKind, seed: u64) -> (Dataset, CaseControlDesign, Link) {
    let model = kind.model(NormalScale::Sd, LogMeanForm::Consistent);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pop = model.generate(&mut rng, 50_000).unwrap();
    let (data, _) = sample_case_control(&pop.data, model.n_cases, model.n_controls, &mut rng).unwrap();
    let design = CaseControlDesign::new(pop.prevalence(), model.n_cases, model.n_controls).unwrap();
    (data, design, model.link)
}

fn column_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn tiny(y: &[f64], d: &[f64], x: &[f64]) -> Dataset {
    let n = y.len();
    let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    Dataset::new(column_vec(y), column_vec(d), xm.clone(), xm.clone(), xm).unwrap()
}

#[test]
fn nu_bar_values() {
    assert_eq!(nu_bar(0.0, 0.3), 0.0);
    let (s, p) = (0.7f64, 0.2);
    let want = (s.exp() * p + 1.0 - p).ln();
    assert!((nu_bar(s, p) - want).abs() < 1e-15);
    // Large s stays finite.
    assert!((nu_bar(800.0, 0.5) - (800.0 + 0.5f64.ln())).abs() < 1e-9);
    let h = 1e-6;
    let ds = (nu_bar(s + h, p) - nu_bar(s - h, p)) / (2.0 * h);
    let dp = (nu_bar(s, p + h) - nu_bar(s, p - h)) / (2.0 * h);
    assert!((nu_bar_ds(s, p) - ds).abs() < 1e-8);
    assert!((nu_bar_dp(s, p) - dp).abs() < 1e-8);
}

#[test]
fn identity_residual_by_hand() {
    // θ = (β0, β1, δ0, δ1) = (1, 2, 0.5, -1); γ = 0.5 - x.
    let data = tiny(&[3.0, 6.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 2.0, -1.0]);
    let p = column_vec(&[0.2, 0.4, 0.5]);
    let theta = column_vec(&[1.0, 2.0, 0.5, -1.0]);
    let r = cont_residual(&theta, &data, Link::Identity, &p).unwrap();
    // Row 0: 3 - 3 - (-0.5)(0.8) = 0.4.
    // Row 1: 6 - 5 - (-1.5)(-0.4) = 0.4.
    // Row 2: 1 - (-1) - (1.5)(0.5) = 1.25.
    let want = [0.4, 0.4, 1.25];
    for i in 0..3 {
        assert!((r[i] - want[i]).abs() < 1e-14, "row {i}: {}", r[i]);
    }
}

#[test]
fn log_residual_by_hand() {
    let data = tiny(&[3.0, 0.0], &[1.0, 0.0], &[0.5, 1.0]);
    let p = column_vec(&[0.3, 0.1]);
    let theta = column_vec(&[0.2, 0.4, 0.1, 0.6]);
    let r = cont_residual(&theta, &data, Link::Log, &p).unwrap();
    for i in 0..2 {
        let x: f64 = [0.5, 1.0][i];
        let s = 0.1 + 0.6 * x;
        let pi = [0.3, 0.1][i];
        let d = [1.0, 0.0][i];
        let m = (0.2 + 0.4 * x + d * s - (s.exp() * pi + 1.0 - pi).ln()).exp();
        assert!((r[i] - ([3.0, 0.0][i] - m)).abs() < 1e-13);
    }
}

#[test]
fn mean_gradient_matches_finite_differences() {
    for kind in [ScenarioKind::IdentityTwoCov, ScenarioKind::LogPoisson] {
        let (data, design, link) = scenario_sample(kind, 4);
        let fit = fit_cc_logistic(&data.x_dis, &data.d).unwrap();
        let p = population_disease_prob(&fit, &data.x_dis, &design);
        let theta = cont_start_values(&data, link, &design).unwrap();
        let grad = cont_mean_gradient(&theta, &data, link, &p).unwrap();
        let fd = fd_jacobian(
            |t| &data.y - cont_residual(t, &data, link, &p).unwrap(),
            &theta,
        );
        let err = rel_err(&grad, &fd);
        assert!(err < 1e-6, "{kind}: {err}");
    }
}

#[test]
fn h1_reduces_to_scaled_design_without_selection() {
    let (data, design, link) = scenario_sample(ScenarioKind::IdentitySingle, 8);
    let n = data.n();
    let p = DVector::from_element(n, 0.2);
    let beta = [45.0, 3.5];
    let theta = column_vec(&[beta[0], beta[1], 0.0, 0.0]);
    let h1 = h1_opt(&theta, &data, link, &p, &design).unwrap();
    let sigma2: f64 = (0..n)
        .map(|i| (data.y[i] - beta[0] - beta[1] * data.x_mean[(i, 1)]).powi(2))
        .sum::<f64>()
        / n as f64;
    let c = sigma2 * (design.control_weight() * 0.8 + design.case_weight() * 0.2);
    for i in [0, 17, n - 1] {
        assert!((h1[(i, 0)] - 1.0 / c).abs() < 1e-12 / c);
        assert!((h1[(i, 1)] - data.x_mean[(i, 1)] / c).abs() < 1e-12 * (1.0 + data.x_mean[(i, 1)].abs()) / c);
        // Selection rows: x_sel (D - p) / c.
        let r = data.d[i] - 0.2;
        assert!((h1[(i, 2)] - r / c).abs() < 1e-12 / c);
        assert!((h1[(i, 3)] - r * data.x_sel[(i, 1)] / c).abs() < 1e-12 * (1.0 + data.x_sel[(i, 1)].abs()) / c);
    }
}

#[test]
fn log_h1_uses_the_mean_as_variance() {
    let (data, design, link) = scenario_sample(ScenarioKind::LogPoisson, 6);
    let fit = fit_cc_logistic(&data.x_dis, &data.d).unwrap();
    let p = population_disease_prob(&fit, &data.x_dis, &design);
    let theta = cont_start_values(&data, link, &design).unwrap();
    let h1 = h1_opt(&theta, &data, link, &p, &design).unwrap();
    let grad = cont_mean_gradient(&theta, &data, link, &p).unwrap();
    let m0 = cont_mean(&theta, &data, link, &p, 0.0).unwrap();
    let m1 = cont_mean(&theta, &data, link, &p, 1.0).unwrap();
    for i in [0, 250, 1999] {
        let c = m0[i] * design.control_weight() * (1.0 - p[i]) + m1[i] * design.case_weight() * p[i];
        for j in 0..h1.ncols() {
            assert!((h1[(i, j)] - grad[(i, j)] / c).abs() <= 1e-12 * (grad[(i, j)] / c).abs().max(1e-300));
        }
    }
}

#[test]
fn zero_residual_variance_is_reported() {
    let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
    let d: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
    let data = tiny(&y, &d, &x);
    let design = CaseControlDesign::new(0.1, 5, 5).unwrap();
    let theta = column_vec(&[1.0, 2.0, 0.0, 0.0]);
    let p = DVector::from_element(10, 0.1);
    assert!(matches!(
        h1_opt(&theta, &data, Link::Identity, &p, &design),
        Err(Error::DegenerateVariance(_))
    ));
}

#[test]
fn joint_system_derivatives_match_finite_differences() {
    for kind in [ScenarioKind::IdentityTwoCov, ScenarioKind::LogPoisson] {
        let (data, design, link) = scenario_sample(kind, 12);
        let fit = fit_cc_logistic(&data.x_dis, &data.d).unwrap();
        let p = population_disease_prob(&fit, &data.x_dis, &design);
        let theta = cont_start_values(&data, link, &design).unwrap();
        let h1 = h1_opt(&theta, &data, link, &p, &design).unwrap();
        let sys = JointSystem::evaluate(&theta, &h1, &data, link, &p, &design).unwrap();

        let u_theta = |t: &DVector<f64>| {
            JointSystem::evaluate(t, &h1, &data, link, &p, &design).unwrap().mean_residual()
        };
        let err = rel_err(&sys.du_dtheta, &fd_jacobian(u_theta, &theta));
        assert!(err < 1e-6, "{kind} dU/dθ: {err}");

        let u_alpha = |a: &DVector<f64>| {
            let pa = population_prob_at(a, &data.x_dis, &design);
            JointSystem::evaluate(&theta, &h1, &data, link, &pa, &design).unwrap().mean_residual()
        };
        let err = rel_err(&sys.du_dalpha, &fd_jacobian(u_alpha, &fit.alpha));
        assert!(err < 1e-6, "{kind} dU/dα: {err}");
    }
}

#[test]
fn newton_agrees_with_derivative_free_solver() {
    for kind in [ScenarioKind::IdentityTwoCov, ScenarioKind::LogPoisson] {
        let (data, design, link) = scenario_sample(kind, 31);
        let fit = fit_cont(&data, link, &design, &ContOptions::default()).unwrap();
        let dfit = fit_cc_logistic(&data.x_dis, &data.d).unwrap();
        let p = population_disease_prob(&dfit, &data.x_dis, &design);
        let theta0 = cont_start_values(&data, link, &design).unwrap();
        let h1 = h1_opt(&theta0, &data, link, &p, &design).unwrap();
        let f = |t: &DVector<f64>| {
            JointSystem::evaluate(t, &h1, &data, link, &p, &design).unwrap().mean_residual()
        };
        let oracle = broyden(f, &theta0, 1e-11, 500).expect("Broyden did not converge");
        let q = fit.beta.len();
        let delta = fit.delta.as_ref().unwrap();
        for j in 0..oracle.len() {
            let ours = if j < q { fit.beta[j] } else { delta[j - q] };
            assert!(
                (ours - oracle[j]).abs() < 1e-6 * (1.0 + oracle[j].abs()),
                "{kind} coefficient {j}: {ours} vs {}",
                oracle[j]
            );
        }
    }
}

#[test]
fn refreshed_weights_still_solve_the_system() {
    let (data, design, link) = scenario_sample(ScenarioKind::IdentityTwoCov, 5);
    let opts = ContOptions {
        refresh_h1: true,
        ..ContOptions::default()
    };
    let fit = fit_cont(&data, link, &design, &opts).unwrap();
    let frozen = fit_cont(&data, link, &design, &ContOptions::default()).unwrap();
    for j in 0..4 {
        let se = frozen.std_errors[j];
        assert!((fit.beta[j] - frozen.beta[j]).abs() < 0.5 * se);
    }
}

#[test]
fn known_p_covariance_is_the_plain_sandwich() {
    let (data, design, link) = scenario_sample(ScenarioKind::IdentityTwoCov, 2);
    let dfit = fit_cc_logistic(&data.x_dis, &data.d).unwrap();
    let p = population_disease_prob(&dfit, &data.x_dis, &design);
    let fit = fit_cont_known_p(&data, link, &design, &p, &ContOptions::default()).unwrap();
    let mut theta = fit.beta.clone().insert_rows(4, 4, 0.0);
    theta.rows_mut(4, 4).copy_from(fit.delta.as_ref().unwrap());
    let theta0 = cont_start_values(&data, link, &design).unwrap();
    let h1 = h1_opt(&theta0, &data, link, &p, &design).unwrap();
    let sys = JointSystem::evaluate(&theta, &h1, &data, link, &p, &design).unwrap();

    let n = data.n() as f64;
    let u = &sys.residual_contribs;
    let b = u.transpose() * u / n;
    let a_inv = sys.du_dtheta.clone().try_inverse().unwrap();
    let want = &a_inv * b * a_inv.transpose() / n;
    assert!(rel_err(&fit.covariance, &want) < 1e-8);
    assert!(rel_err(&sandwich_covariance(&sys, None).unwrap(), &want) < 1e-10);
}

#[test]
fn corrected_covariance_matches_influence_oracle() {
    let (data, design, link) = scenario_sample(ScenarioKind::IdentitySingle, 3);
    let fit = fit_cont(&data, link, &design, &ContOptions::default()).unwrap();
    let dfit = fit_cc_logistic(&data.x_dis, &data.d).unwrap();
    let p = population_disease_prob(&dfit, &data.x_dis, &design);
    let theta0 = cont_start_values(&data, link, &design).unwrap();
    let h1 = h1_opt(&theta0, &data, link, &p, &design).unwrap();
    let q = fit.beta.len();
    let delta = fit.delta.as_ref().unwrap();
    let theta = DVector::from_fn(q + delta.len(), |j, _| if j < q { fit.beta[j] } else { delta[j - q] });
    let sys = JointSystem::evaluate(&theta, &h1, &data, link, &p, &design).unwrap();

    // Oracle: derivatives by finite differences, V rows and E[∂V/∂α] by hand.
    let n = data.n();
    let du_da = fd_jacobian(
        |a| {
            let pa = population_prob_at(a, &data.x_dis, &design);
            JointSystem::evaluate(&theta, &h1, &data, link, &pa, &design).unwrap().mean_residual()
        },
        &dfit.alpha,
    );
    let pcc = (&data.x_dis * &dfit.alpha).map(common::expit);
    let mut dv_da = DMatrix::zeros(2, 2);
    let mut v = DMatrix::zeros(n, 2);
    for i in 0..n {
        let x = data.x_dis.row(i).transpose();
        dv_da -= &x * x.transpose() * (pcc[i] * (1.0 - pcc[i]));
        v.set_row(i, &(x * (data.d[i] - pcc[i])).transpose());
    }
    dv_da /= n as f64;
    let adj = dv_da.try_inverse().unwrap();
    let phi = &sys.residual_contribs - &v * adj.transpose() * du_da.transpose();
    let meat = phi.transpose() * &phi / n as f64;
    let a_inv = sys.du_dtheta.clone().try_inverse().unwrap();
    let want = &a_inv * meat * a_inv.transpose() / n as f64;
    let err = rel_err(&fit.covariance, &want);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn ipw_with_unit_weights_is_ols() {
    // Two cases, two controls, prevalence 1/2: every weight is 1.
    let data = tiny(&[1.0, 3.0, 2.0, 5.0], &[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 2.0, 3.0]);
    let design = CaseControlDesign::new(0.5, 2, 2).unwrap();
    let ipw = fit_ipw(&data, Link::Identity, &design).unwrap();
    let pooled = fit_pooled(&data, Link::Identity).unwrap();
    for fit in [&ipw, &pooled] {
        assert!((fit.beta[0] - 1.1).abs() < 1e-12);
        assert!((fit.beta[1] - 1.1).abs() < 1e-12);
    }
}

#[test]
fn ipw_matches_weighted_least_squares() {
    let x = [0.5, 1.5, -1.0, 2.0, 0.0, 3.0];
    let y = [2.0, 1.0, -0.5, 4.0, 1.5, 5.5];
    let d = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let data = tiny(&y, &d, &x);
    let design = CaseControlDesign::new(0.1, 2, 4).unwrap();
    let fit = fit_ipw(&data, Link::Identity, &design).unwrap();
    // w1 = 0.1 * 6 / 2, w0 = 0.9 * 6 / 4.
    let w: Vec<f64> = d.iter().map(|&di| if di == 1.0 { 0.3 } else { 1.35 }).collect();
    let xm = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let wm = DMatrix::from_diagonal(&column_vec(&w));
    let want = (xm.transpose() * &wm * &xm).try_inverse().unwrap() * xm.transpose() * wm * column_vec(&y);
    assert!((fit.beta - want).amax() < 1e-12);
}

#[test]
fn dind_solves_its_normal_equations() {
    let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [1.0, 3.0, 2.0, 5.0, 4.0, 7.5];
    let d = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let data = tiny(&y, &d, &x);
    let fit = fit_dind(&data, Link::Identity).unwrap();
    let xm = DMatrix::from_fn(6, 3, |i, j| [1.0, x[i], d[i]][j]);
    let want = (xm.transpose() * &xm).try_inverse().unwrap() * xm.transpose() * column_vec(&y);
    assert!((fit.beta[0] - want[0]).abs() < 1e-12);
    assert!((fit.beta[1] - want[1]).abs() < 1e-12);
    assert!((fit.disease_coef.unwrap() - want[2]).abs() < 1e-12);
}

#[test]
fn newton_reports_failures() {
    let opts = NewtonOptions::default();
    let start = column_vec(&[0.7]);
    let rootless = newton_solve(
        |t| Ok(column_vec(&[t[0] * t[0] + 1.0])),
        |t| Ok(DMatrix::from_element(1, 1, 2.0 * t[0])),
        &start,
        &opts,
        "test",
    );
    assert!(matches!(
        rootless,
        Err(Error::NonConvergence { .. }) | Err(Error::SingularJacobian(_))
    ));
}

#[test]
fn rank_deficient_selection_design_is_rejected() {
    let (data, design, link) = scenario_sample(ScenarioKind::IdentitySingle, 1);
    let dup = data.with_selection_columns(&[0, 1, 1]).unwrap();
    assert!(matches!(
        fit_cont(&dup, link, &design, &ContOptions::default()),
        Err(Error::RankDeficient(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sandwich_is_symmetric_psd(
        seed in any::<u64>(),
        k in 1usize..5,
        n in 10usize..60,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let u = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5);
        let mut a = DMatrix::from_fn(k, k, |_, _| 0.3 * (rng.random::<f64>() - 0.5));
        for j in 0..k {
            a[(j, j)] += 1.0;
        }
        let cov = sandwich(&u, &a, None, "test").unwrap();
        prop_assert!((&cov - cov.transpose()).amax() <= 1e-15 * cov.amax().max(1e-300));
        let eig = cov.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-12 * cov.amax());
    }
}
