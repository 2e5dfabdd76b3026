#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Central-difference Jacobian of `f` at `x` (rows: outputs, columns: inputs).
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let h = 1e-5 * x[j].abs().max(1.0);
        let mut up = x.clone();
        let mut down = x.clone();
        up[j] += h;
        down[j] -= h;
        let col = (f(&up) - f(&down)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Largest entrywise difference relative to the largest entry of `want`.
pub fn rel_err(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    let scale = want.amax().max(1e-300);
    (got - want).amax() / scale
}

/// Broyden's method with a finite-difference initial Jacobian. Uses no
/// analytic derivatives.
pub fn broyden<F>(f: F, x0: &DVector<f64>, tol: f64, max_iter: usize) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut b = fd_jacobian(&f, &x);
    for _ in 0..max_iter {
        if fx.amax() < tol {
            return Some(x);
        }
        let step = b.clone().lu().solve(&(-&fx))?;
        let x_new = &x + &step;
        let f_new = f(&x_new);
        let y = &f_new - &fx;
        let denom = step.dot(&step);
        if denom == 0.0 {
            return None;
        }
        b += (&y - &b * &step) * step.transpose() / denom;
        x = x_new;
        fx = f_new;
    }
    (fx.amax() < tol).then_some(x)
}

/// Standard normal density.
pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[f(Z)]` for `Z ~ N(mean, sd²)` by composite Simpson over ±12 sd.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, mean: f64, sd: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let z = a + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(mean + sd * z) * phi(z);
    }
    acc * h / 3.0
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
