//! Gradient descent vs idealized matrix-normalized dynamics on the
//! two-dimensional matrix quadratic `f(W) = 1/2 tr(W^T A W)` with
//! `A = Q diag(lambda, 1) Q^T`.
//!
//! In the eigenbasis the GD iterate contracts each coordinate by
//! `(1 - eta lambda_i)`; the matrix-normalized update moves each nonzero
//! coordinate by a constant `eta sign(a_t)`, which produces a two-cycle
//! once `0 < a_t < eta`. The normalized step goes through the real polar
//! oracle on `Q diag(lambda a_t, b_t)`, not a hard-coded sign rule.

use crate::error::{AmuseError, Result};
use crate::linalg::{polar_factor_oracle, DenseMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    Gd,
    MatrixNormalized,
}

#[derive(Debug, Clone)]
pub struct QuadTrajectory {
    /// Coordinate along the high-curvature direction, a_0..a_T.
    pub a: Vec<f64>,
    /// Coordinate along the unit-curvature direction, b_0..b_T.
    pub b: Vec<f64>,
}

/// The fixed orthogonal frame used by the matrix-normalized dynamics.
fn rotation_q() -> DenseMatrix {
    let theta = 0.6f64;
    DenseMatrix::new(
        2,
        2,
        vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
    )
    .expect("rotation")
}

pub fn run_quadratic(
    lambda: f64,
    eta: f64,
    a0: f64,
    b0: f64,
    steps: usize,
    mode: QuadMode,
) -> Result<QuadTrajectory> {
    if !(lambda > 1.0) {
        return Err(AmuseError::InvalidArgument(format!(
            "lambda = {lambda} must exceed 1"
        )));
    }
    if !(eta > 0.0) {
        return Err(AmuseError::InvalidArgument(format!(
            "eta = {eta} must be positive"
        )));
    }

    let mut a = Vec::with_capacity(steps + 1);
    let mut b = Vec::with_capacity(steps + 1);
    a.push(a0);
    b.push(b0);

    match mode {
        QuadMode::Gd => {
            let (mut at, mut bt) = (a0, b0);
            for _ in 0..steps {
                at *= 1.0 - eta * lambda;
                bt *= 1.0 - eta;
                a.push(at);
                b.push(bt);
            }
        }
        QuadMode::MatrixNormalized => {
            let q = rotation_q();
            let v0 = DenseMatrix::diag(&[a0, b0]);
            let mut w = q.matmul(&v0);
            for _ in 0..steps {
                // V = Q^T W; gradient is Q Lambda V.
                let v = q.t_matmul(&w);
                let (at, bt) = (v.get(0, 0), v.get(1, 1));
                if at == 0.0 || bt == 0.0 {
                    return Err(AmuseError::InvalidArgument(format!(
                        "matrix-normalized dynamics hit an exactly zero coordinate (a={at}, b={bt}); the polar factor is undefined there"
                    )));
                }
                let grad_v = DenseMatrix::diag(&[lambda * at, bt]);
                let grad = q.matmul(&grad_v);
                let polar = polar_factor_oracle(&grad)?;
                w.axpy_in_place(-eta, &polar);
                let v_next = q.t_matmul(&w);
                a.push(v_next.get(0, 0));
                b.push(v_next.get(1, 1));
            }
        }
    }
    Ok(QuadTrajectory { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gd_first_step_contracts_by_the_curvature() {
        let t = run_quadratic(4.0, 0.1, 1.0, 1.0, 1, QuadMode::Gd).unwrap();
        assert!((t.a[1] - 0.6).abs() < 1e-15);
        assert!((t.b[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn gd_contracts_and_preserves_sign_in_the_stable_regime() {
        for &(lambda, eta, a0) in &[(4.0, 0.2, 1.0), (10.0, 0.05, -0.3), (2.0, 0.4, 0.7)] {
            assert!(eta < 1.0 / lambda);
            let t = run_quadratic(lambda, eta, a0, 1.0, 30, QuadMode::Gd).unwrap();
            for s in 1..t.a.len() {
                assert!(t.a[s].abs() < t.a[s - 1].abs());
                assert_eq!(t.a[s].signum(), t.a[s - 1].signum());
            }
        }
    }

    #[test]
    fn matrix_normalized_two_cycle() {
        // 0 < a_0 < eta: a_1 = a_0 - eta < 0, a_2 = a_0 again.
        let t = run_quadratic(4.0, 0.5, 0.3, 5.0, 4, QuadMode::MatrixNormalized).unwrap();
        assert!((t.a[1] + 0.2).abs() < 1e-12, "a_1 = {}", t.a[1]);
        assert!((t.a[2] - 0.3).abs() < 1e-12, "a_2 = {}", t.a[2]);
        assert!((t.a[3] + 0.2).abs() < 1e-12);
        assert!((t.a[4] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn matrix_normalized_moves_by_eta_in_each_coordinate() {
        let t = run_quadratic(3.0, 0.25, 2.0, -4.0, 3, QuadMode::MatrixNormalized).unwrap();
        for s in 1..t.a.len() {
            assert!(((t.a[s] - t.a[s - 1]).abs() - 0.25).abs() < 1e-12);
            assert!(((t.b[s] - t.b[s - 1]).abs() - 0.25).abs() < 1e-12);
        }
        // b walks toward zero from below: -4, -3.75, ...
        assert!((t.b[3] + 3.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_regimes_and_degenerate_coordinates() {
        assert!(run_quadratic(0.5, 0.1, 1.0, 1.0, 1, QuadMode::Gd).is_err());
        assert!(run_quadratic(4.0, 0.0, 1.0, 1.0, 1, QuadMode::Gd).is_err());
        let err = run_quadratic(4.0, 0.5, 0.0, 1.0, 1, QuadMode::MatrixNormalized)
            .unwrap_err()
            .to_string();
        assert!(err.contains("polar factor is undefined"), "{err}");
    }
}
