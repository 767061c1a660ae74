//! Newton-Schulz orthogonalization.
//!
//! Approximates the polar factor with matrix-polynomial iterations. Two
//! coefficient sets are shipped:
//!
//! - `CubicExact`: `X <- 1.5 X - 0.5 X X^T X`. Converges to the true polar
//!   factor for singular values in (0, sqrt(3)); used by correctness tests.
//! - `MuonFast`: the quintic `X <- a X + (b A + c A^2) X` with
//!   `(a, b, c) = (3.4445, -4.7750, 2.0315)` and 5 iterations, trading
//!   accuracy for speed. Output singular values land in a loose band around
//!   1 rather than converging; this is the training default.
//!
//! Input is pre-normalized by its Frobenius norm (plus a small epsilon) so
//! all singular values start in (0, 1]. Rectangular inputs with more rows
//! than columns are processed through the transpose so the Gram matrix
//! stays on the small side.

use crate::error::{AmuseError, Result};
use crate::linalg::matrix::{gemm, DenseMatrix};

/// Guard added to the Frobenius norm before pre-normalization.
pub const NS_NORM_EPS: f64 = 1e-7;

/// Quintic coefficients used by the fast variant.
pub const MUON_FAST_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);

/// Default iteration count for the fast variant.
pub const MUON_FAST_ITERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NsCoeffs {
    CubicExact,
    MuonFast,
}

/// Newton-Schulz approximation of the polar factor.
pub fn newton_schulz(m: &DenseMatrix, iters: usize, coeffs: NsCoeffs) -> Result<DenseMatrix> {
    if iters == 0 {
        return Err(AmuseError::InvalidArgument(
            "newton_schulz requires at least one iteration".into(),
        ));
    }
    if m.has_nan() {
        return Err(AmuseError::NonFinite("newton_schulz input".into()));
    }
    if m.is_all_zero() {
        return Err(AmuseError::ZeroMatrix);
    }

    if m.rows() > m.cols() {
        let o = orthogonalize_oriented(&m.transpose(), iters, coeffs);
        return Ok(o.transpose());
    }
    Ok(orthogonalize_oriented(m, iters, coeffs))
}

/// Core iteration for matrices with rows <= cols.
fn orthogonalize_oriented(m: &DenseMatrix, iters: usize, coeffs: NsCoeffs) -> DenseMatrix {
    let scale = 1.0 / (m.frobenius_norm() + NS_NORM_EPS);
    let mut x = m.scale(scale);

    for _ in 0..iters {
        let a = x.matmul_t(&x); // X X^T, small side
        match coeffs {
            NsCoeffs::CubicExact => {
                // X <- 1.5 X - 0.5 A X
                let ax = a.matmul(&x);
                let mut next = x.scale(1.5);
                next.axpy_in_place(-0.5, &ax);
                x = next;
            }
            NsCoeffs::MuonFast => {
                let (ca, cb, cc) = MUON_FAST_COEFFS;
                // B = b A + c A^2 ; X <- a X + B X
                let mut b = gemm(cc, &a, false, &a, false);
                b.axpy_in_place(cb, &a);
                let bx = b.matmul(&x);
                let mut next = x.scale(ca);
                next.axpy_in_place(1.0, &bx);
                x = next;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::polar::{polar_factor_oracle, singular_values};
    use crate::rng::AmuseRng;

    #[test]
    fn identity_converges_to_identity() {
        let id = DenseMatrix::identity(3);
        let o = newton_schulz(&id, 20, NsCoeffs::CubicExact).unwrap();
        // Polar factor of the identity is the identity; after pre-normalization
        // the singular values must be driven back to 1.
        let svs = singular_values(&o).unwrap();
        for s in svs {
            assert!((s - 1.0).abs() < 1e-6, "singular value {s}");
        }
        assert!(o.frobenius_distance(&DenseMatrix::identity(3)) < 1e-6);
    }

    #[test]
    fn positive_diagonal_converges_to_identity() {
        let m = DenseMatrix::diag(&[2.0, 0.5]);
        let o = newton_schulz(&m, 20, NsCoeffs::CubicExact).unwrap();
        let oracle = polar_factor_oracle(&m).unwrap();
        assert!(oracle.frobenius_distance(&DenseMatrix::identity(2)) < 1e-10);
        assert!(o.frobenius_distance(&oracle) < 1e-6);
    }

    #[test]
    fn recovers_sign_structure_through_orthogonal_factor() {
        let mut rng = AmuseRng::seed_from_u64(23);
        let raw = DenseMatrix::from_fn(2, 2, |_, _| rng.normal());
        let q = polar_factor_oracle(&raw).unwrap();
        let (lambda, a, b) = (4.0, -0.7, 0.3);
        let m = q.matmul(&DenseMatrix::diag(&[lambda * a, b]));
        let expected = q.matmul(&DenseMatrix::diag(&[a.signum(), b.signum()]));
        let oracle = polar_factor_oracle(&m).unwrap();
        assert!(oracle.frobenius_distance(&expected) < 1e-10);
        let ns = newton_schulz(&m, 25, NsCoeffs::CubicExact).unwrap();
        assert!(ns.frobenius_distance(&expected) < 1e-5);
    }

    #[test]
    fn cubic_matches_oracle_on_bounded_spectrum() {
        let mut rng = AmuseRng::seed_from_u64(99);
        for _ in 0..10 {
            let n = 4 + rng.below(4);
            let u = polar_factor_oracle(&DenseMatrix::from_fn(n, n, |_, _| rng.normal())).unwrap();
            let v = polar_factor_oracle(&DenseMatrix::from_fn(n, n, |_, _| rng.normal())).unwrap();
            // Singular values in [0.3, 1.0]; after Frobenius pre-normalization they
            // stay above 0.05 for these sizes.
            let sig: Vec<f64> = (0..n).map(|_| rng.uniform(0.3, 1.0)).collect();
            let m = u.matmul(&DenseMatrix::diag(&sig)).matmul_t(&v);
            let ns = newton_schulz(&m, 20, NsCoeffs::CubicExact).unwrap();
            let oracle = polar_factor_oracle(&m).unwrap();
            let d = ns.frobenius_distance(&oracle);
            assert!(d < 1e-5, "Frobenius distance {d} at n={n}");
        }
    }

    #[test]
    fn muon_fast_lands_in_loose_band() {
        let mut rng = AmuseRng::seed_from_u64(7);
        for _ in 0..10 {
            let u = polar_factor_oracle(&DenseMatrix::from_fn(5, 5, |_, _| rng.normal())).unwrap();
            let v = polar_factor_oracle(&DenseMatrix::from_fn(5, 5, |_, _| rng.normal())).unwrap();
            let sig: Vec<f64> = (0..5).map(|_| rng.uniform(0.3, 1.0)).collect();
            let m = u.matmul(&DenseMatrix::diag(&sig)).matmul_t(&v);
            let ns = newton_schulz(&m, MUON_FAST_ITERS, NsCoeffs::MuonFast).unwrap();
            for s in singular_values(&ns).unwrap() {
                assert!((0.6..=1.4).contains(&s), "singular value {s} out of band");
            }
        }
    }

    #[test]
    fn rectangular_orientation_round_trips() {
        let mut rng = AmuseRng::seed_from_u64(31);
        let tall = DenseMatrix::from_fn(6, 3, |_, _| rng.normal());
        let o = newton_schulz(&tall, 20, NsCoeffs::CubicExact).unwrap();
        assert_eq!(o.shape(), (6, 3));
        let oracle = polar_factor_oracle(&tall).unwrap();
        assert!(o.frobenius_distance(&oracle) < 1e-5);
    }

    #[test]
    fn zero_and_nan_are_rejected() {
        let z = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            newton_schulz(&z, 5, NsCoeffs::CubicExact),
            Err(AmuseError::ZeroMatrix)
        ));
        let mut m = DenseMatrix::zeros(2, 2);
        m.data_mut()[0] = f64::NAN;
        assert!(matches!(
            newton_schulz(&m, 5, NsCoeffs::CubicExact),
            Err(AmuseError::NonFinite(_))
        ));
        assert!(newton_schulz(&DenseMatrix::identity(2), 0, NsCoeffs::CubicExact).is_err());
    }
}
