//! Exact polar factor via symmetric eigendecomposition of the Gram matrix.
//!
//! This is the slow, high-accuracy route used as the correctness oracle for
//! the Newton-Schulz iteration and by the idealized matrix-normalized
//! dynamics. The eigensolver is a cyclic Jacobi rotation scheme, which is
//! simple, deterministic, and accurate to near machine precision for the
//! small Gram matrices this kit works with.

use crate::error::{AmuseError, Result};
use crate::linalg::matrix::DenseMatrix;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matrix whose columns are
/// the corresponding orthonormal eigenvectors.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows();
    if a.rows() != a.cols() {
        return Err(AmuseError::ShapeMismatch {
            context: "symmetric_eigen".into(),
            expected: "square matrix".into(),
            actual: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    if !a.is_finite() {
        return Err(AmuseError::NonFinite("symmetric_eigen input".into()));
    }

    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm().max(1.0);
    let tol = 1e-15 * scale;
    const MAX_SWEEPS: usize = 64;

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q).powi(2);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of M.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                // Accumulate the rotation into V.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m.get(i, i), i)).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let evals: Vec<f64> = pairs.iter().map(|(l, _)| *l).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (new_col, &(_, old_col)) in pairs.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, new_col, v.get(k, old_col));
        }
    }
    Ok((evals, vecs))
}

/// Exact polar factor `O(G) = G (G^T G)^{-1/2}` of a full-rank matrix.
///
/// Wide matrices (`rows < cols`) are handled through the transpose so the
/// Gram matrix is always taken on the smaller side; the result then
/// satisfies `O O^T = I` instead of `O^T O = I`.
pub fn polar_factor_oracle(g: &DenseMatrix) -> Result<DenseMatrix> {
    if !g.is_finite() {
        return Err(AmuseError::NonFinite("polar_factor_oracle input".into()));
    }
    if g.is_all_zero() {
        return Err(AmuseError::ZeroMatrix);
    }
    if g.rows() < g.cols() {
        return Ok(polar_factor_oracle(&g.transpose())?.transpose());
    }

    let gram = g.t_matmul(g);
    let (evals, v) = symmetric_eigen(&gram)?;
    let sigmas: Vec<f64> = evals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let largest = sigmas[0];
    for (i, &s) in sigmas.iter().enumerate() {
        if s <= 1e-10 * largest {
            return Err(AmuseError::RankDeficient {
                index: i,
                value: s,
                largest,
            });
        }
    }

    // O = G * V * diag(1/sigma) * V^T
    let n = sigmas.len();
    let mut v_scaled = v.clone();
    for i in 0..n {
        for j in 0..n {
            v_scaled.set(i, j, v.get(i, j) / sigmas[j]);
        }
    }
    let inner = v_scaled.matmul_t(&v);
    Ok(g.matmul(&inner))
}

/// Singular values of a matrix (descending), via the Gram eigenvalues.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    let gram = if m.rows() >= m.cols() {
        m.t_matmul(m)
    } else {
        m.matmul_t(m)
    };
    let (evals, _) = symmetric_eigen(&gram)?;
    Ok(evals.iter().map(|l| l.max(0.0).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::AmuseRng;

    fn random_orthogonal(n: usize, rng: &mut AmuseRng) -> DenseMatrix {
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.normal());
        polar_factor_oracle(&m).unwrap()
    }

    #[test]
    fn eigen_of_known_diagonal() {
        let a = DenseMatrix::diag(&[3.0, -1.0, 7.0]);
        let (evals, _) = symmetric_eigen(&a).unwrap();
        assert_eq!(evals, vec![7.0, 3.0, -1.0]);
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let mut rng = AmuseRng::seed_from_u64(11);
        let b = DenseMatrix::from_fn(6, 6, |_, _| rng.normal());
        let a = b.add(&b.transpose()).scale(0.5);
        let (evals, v) = symmetric_eigen(&a).unwrap();
        let recon = {
            let vl = v.matmul(&DenseMatrix::diag(&evals));
            vl.matmul_t(&v)
        };
        assert!(a.frobenius_distance(&recon) < 1e-12 * a.frobenius_norm().max(1.0));
        let vtv = v.t_matmul(&v);
        assert!(vtv.frobenius_distance(&DenseMatrix::identity(6)) < 1e-13);
    }

    #[test]
    fn polar_of_orthogonal_is_itself() {
        let mut rng = AmuseRng::seed_from_u64(3);
        let q = random_orthogonal(4, &mut rng);
        let o = polar_factor_oracle(&q).unwrap();
        assert!(o.frobenius_distance(&q) < 1e-12);
    }

    #[test]
    fn polar_of_positive_diagonal_is_identity() {
        let m = DenseMatrix::diag(&[3.0, 0.2]);
        let o = polar_factor_oracle(&m).unwrap();
        assert!(o.frobenius_distance(&DenseMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn polar_output_is_orthogonal_for_well_conditioned_input() {
        let mut rng = AmuseRng::seed_from_u64(17);
        for _ in 0..20 {
            // Condition number below 100 by construction of the singular values.
            let u = random_orthogonal(4, &mut rng);
            let v = random_orthogonal(4, &mut rng);
            let sig = DenseMatrix::diag(&[1.0, 0.5, 0.1, 0.011]);
            let m = u.matmul(&sig).matmul_t(&v);
            let o = polar_factor_oracle(&m).unwrap();
            let err = o
                .t_matmul(&o)
                .frobenius_distance(&DenseMatrix::identity(4));
            assert!(err < 1e-9, "orthogonality error {err}");
        }
    }

    #[test]
    fn polar_handles_wide_matrices() {
        let mut rng = AmuseRng::seed_from_u64(5);
        let m = DenseMatrix::from_fn(3, 7, |_, _| rng.normal());
        let o = polar_factor_oracle(&m).unwrap();
        assert_eq!(o.shape(), (3, 7));
        let err = o
            .matmul_t(&o)
            .frobenius_distance(&DenseMatrix::identity(3));
        assert!(err < 1e-9);
    }

    #[test]
    fn polar_rejects_zero_and_rank_deficient() {
        let z = DenseMatrix::zeros(3, 3);
        assert!(matches!(
            polar_factor_oracle(&z),
            Err(AmuseError::ZeroMatrix)
        ));

        let mut d = DenseMatrix::diag(&[1.0, 1.0, 0.0]);
        d.set(2, 2, 1e-15);
        match polar_factor_oracle(&d) {
            Err(AmuseError::RankDeficient { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected rank-deficiency error, got {other:?}"),
        }
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = DenseMatrix::diag(&[-4.0, 2.0]);
        let s = singular_values(&m).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-12);
        assert!((s[1] - 2.0).abs() < 1e-12);
    }
}
