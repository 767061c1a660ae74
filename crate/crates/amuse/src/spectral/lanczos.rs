//! Matrix-free top-k eigensolver.
//!
//! Lanczos with full reorthogonalization builds an orthonormal Krylov
//! basis from the Hessian-vector product; on (lucky) breakdown a fresh
//! random direction orthogonal to everything so far restarts the
//! recurrence, which is what recovers full multiplicity on degenerate
//! spectra. Ritz pairs come from an explicit Rayleigh-Ritz projection
//! `T = V^T (H V)` rather than the raw three-term coefficients; with the
//! stored `H V` block this costs nothing extra and is robust across
//! restarts.

use crate::error::{AmuseError, Result};
use crate::linalg::{dot, norm, symmetric_eigen, DenseMatrix};
use crate::rng::AmuseRng;

use super::basis::EigenBasis;

/// Acceptable relative residual for a retained eigenpair.
pub const RESIDUAL_TOL: f64 = 1e-4;

/// Top-k eigenpairs by (signed) eigenvalue of a symmetric operator given
/// only through its matrix-vector product. Deterministic per seed.
pub fn lanczos_topk(
    hvp: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    dim: usize,
    k: usize,
    iters: usize,
    seed: u64,
    anchor: Vec<f64>,
) -> Result<EigenBasis> {
    if k == 0 || k > iters || iters > dim {
        return Err(AmuseError::InvalidArgument(format!(
            "lanczos needs 1 <= k <= iters <= dim, got k={k}, iters={iters}, dim={dim}"
        )));
    }

    let mut rng = AmuseRng::for_stream(seed, 0x6c616e); // "lan"
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(iters);
    let mut h_basis: Vec<Vec<f64>> = Vec::with_capacity(iters);

    let mut v = rng.unit_vector(dim);
    let breakdown_tol = 1e-12;

    while basis.len() < iters {
        // Orthogonalize v against everything so far (twice), normalize.
        for _ in 0..2 {
            for u in &basis {
                let c = dot(u, &v);
                for (ve, ue) in v.iter_mut().zip(u) {
                    *ve -= c * ue;
                }
            }
        }
        let vn = norm(&v);
        if vn < breakdown_tol {
            // Invariant subspace exhausted; restart with a fresh direction.
            v = rng.unit_vector(dim);
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vn);

        let w = hvp(&v)?;
        if w.len() != dim {
            return Err(AmuseError::ShapeMismatch {
                context: "lanczos hvp".into(),
                expected: format!("{dim} elements"),
                actual: format!("{} elements", w.len()),
            });
        }
        basis.push(v.clone());
        h_basis.push(w.clone());

        // Next direction: the residual of the recurrence. Full
        // reorthogonalization happens at the top of the loop.
        let alpha = dot(&v, &w);
        let mut next = w;
        for (ne, ve) in next.iter_mut().zip(&v) {
            *ne -= alpha * ve;
        }
        if basis.len() >= 2 {
            let prev = &basis[basis.len() - 2];
            let beta = dot(prev, &next);
            for (ne, pe) in next.iter_mut().zip(prev) {
                *ne -= beta * pe;
            }
        }
        v = next;
        if norm(&v) < breakdown_tol {
            v = rng.unit_vector(dim);
        }
    }

    // Rayleigh-Ritz: T = V^T (H V), symmetrized.
    let m = basis.len();
    let mut t = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let tij = 0.5 * (dot(&basis[i], &h_basis[j]) + dot(&basis[j], &h_basis[i]));
            t.set(i, j, tij);
            t.set(j, i, tij);
        }
    }
    let (evals, y) = symmetric_eigen(&t)?;

    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for idx in 0..k {
        let theta = evals[idx];
        let mut u = vec![0.0; dim];
        let mut hu = vec![0.0; dim];
        for j in 0..m {
            let c = y.get(j, idx);
            for ((ue, hue), (be, hbe)) in u
                .iter_mut()
                .zip(hu.iter_mut())
                .zip(basis[j].iter().zip(&h_basis[j]))
            {
                *ue += c * be;
                *hue += c * hbe;
            }
        }
        // Normalize (the Ritz combination is already near-unit).
        let un = norm(&u);
        u.iter_mut().for_each(|e| *e /= un);
        hu.iter_mut().for_each(|e| *e /= un);
        let res_vec: f64 = hu
            .iter()
            .zip(&u)
            .map(|(h, uu)| (h - theta * uu) * (h - theta * uu))
            .sum::<f64>()
            .sqrt();
        let res = res_vec / theta.abs().max(1e-12);
        eigenvalues.push(theta);
        eigenvectors.push(u);
        residuals.push(res);
    }

    let worst = residuals.iter().cloned().fold(0.0f64, f64::max);
    if worst > RESIDUAL_TOL {
        return Err(AmuseError::NoConvergence {
            worst_residual: worst,
            iters,
        });
    }

    Ok(EigenBasis {
        eigenvalues,
        eigenvectors,
        anchor,
        residuals,
    })
}

/// Dense-matrix convenience wrapper, mainly for tests and small problems.
pub fn lanczos_topk_dense(
    a: &DenseMatrix,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<EigenBasis> {
    assert_eq!(a.rows(), a.cols());
    let dim = a.rows();
    let mut hvp = |v: &[f64]| -> Result<Vec<f64>> {
        let vm = DenseMatrix::new(dim, 1, v.to_vec())?;
        Ok(a.matmul(&vm).into_data())
    };
    lanczos_topk(&mut hvp, dim, k, iters, seed, vec![0.0; dim])
}
