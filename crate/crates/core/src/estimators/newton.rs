//! Damped Newton-Raphson for square estimating-equation systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, solve};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Bound on `max |F(θ)|` at convergence.
    pub residual_tol: f64,
    /// Bound on `max |Δθ|` of the Newton step at convergence.
    pub step_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-9,
            step_tol: 1e-9,
            max_iter: 100,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub theta: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
}

/// Finds a root of `residual` starting from `start`.
///
/// Each iteration solves `J Δ = -F` and halves the step until the Euclidean
/// norm of `F` decreases. Convergence requires both the residual and the
/// proposed step to be below their tolerances; `iterations` counts the
/// updates applied before that point.
pub fn newton_solve<F, J>(
    mut residual: F,
    mut jacobian: J,
    start: &DVector<f64>,
    opts: &NewtonOptions,
    stage: &str,
) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
    let mut theta = start.clone();
    let mut f = residual(&theta)?;
    if !finite(&f) {
        return Err(Error::NonFinite(format!("{stage} residual")));
    }

    for iter in 0..=opts.max_iter {
        let jac = jacobian(&theta)?;
        if !jac.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("{stage} Jacobian")));
        }
        let step = solve(&jac, &(-&f), stage)?;
        if max_abs(&f) < opts.residual_tol && max_abs(&step) < opts.step_tol {
            return Ok(NewtonOutcome {
                theta,
                residual: f,
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let norm = f.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &theta + &step * t;
            if let Ok(fc) = residual(&cand) {
                if finite(&fc) && fc.norm() < norm {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                theta = cand;
                f = fc;
            }
            // No decrease along the Newton direction: the residual is at its
            // numerical floor.
            None if max_abs(&f) < opts.residual_tol => {
                return Ok(NewtonOutcome {
                    theta,
                    residual: f,
                    iterations: iter,
                })
            }
            None => {
                return Err(Error::NonConvergence {
                    stage: format!("{stage} (line search)"),
                    iterations: iter,
                })
            }
        }
    }
    Err(Error::NonConvergence {
        stage: stage.to_string(),
        iterations: opts.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn linear_root_in_one_step() {
        let out = newton_solve(
            |t| Ok(scalar(t[0] - 2.0)),
            |_| Ok(DMatrix::from_element(1, 1, 1.0)),
            &scalar(0.0),
            &NewtonOptions::default(),
            "test",
        )
        .unwrap();
        assert_eq!(out.theta[0], 2.0);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn quadratic_root_from_three() {
        let out = newton_solve(
            |t| Ok(scalar(t[0] * t[0] - 4.0)),
            |t| Ok(DMatrix::from_element(1, 1, 2.0 * t[0])),
            &scalar(3.0),
            &NewtonOptions::default(),
            "test",
        )
        .unwrap();
        assert!((out.theta[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_jacobian_is_singular() {
        let err = newton_solve(
            |t| Ok(scalar(t[0] * t[0] + 1.0)),
            |_| Ok(DMatrix::from_element(1, 1, 0.0)),
            &scalar(0.0),
            &NewtonOptions::default(),
            "test",
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularJacobian(_)));
    }

    #[test]
    fn rootless_system_does_not_converge() {
        // f(θ) = θ² + 1 has no real root; the damped iteration stalls.
        let err = newton_solve(
            |t| Ok(scalar(t[0] * t[0] + 1.0)),
            |t| Ok(DMatrix::from_element(1, 1, 2.0 * t[0])),
            &scalar(0.7),
            &NewtonOptions::default(),
            "test",
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn nonfinite_residual_is_reported() {
        let err = newton_solve(
            |_| Ok(scalar(f64::NAN)),
            |_| Ok(DMatrix::from_element(1, 1, 1.0)),
            &scalar(0.0),
            &NewtonOptions::default(),
            "test",
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
