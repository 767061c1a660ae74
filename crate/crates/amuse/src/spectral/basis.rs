//! Top-k Hessian eigenbasis and dominant/bulk projections.

use crate::error::{AmuseError, Result};
use crate::linalg::{dot, norm};

/// Top-k eigenpairs of the loss Hessian at a parameter point.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    /// Descending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one per eigenvalue.
    pub eigenvectors: Vec<Vec<f64>>,
    /// The parameter point the basis was computed at.
    pub anchor: Vec<f64>,
    /// Relative residuals achieved per pair.
    pub residuals: Vec<f64>,
}

impl EigenBasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Checks pairwise orthonormality and descending order.
    pub fn validate(&self) -> Result<()> {
        for i in 1..self.eigenvalues.len() {
            if self.eigenvalues[i] > self.eigenvalues[i - 1] {
                return Err(AmuseError::InvalidArgument(
                    "eigenvalues not sorted descending".into(),
                ));
            }
        }
        for i in 0..self.eigenvectors.len() {
            for j in i..self.eigenvectors.len() {
                let d = dot(&self.eigenvectors[i], &self.eigenvectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                if (d - target).abs() > 1e-8 {
                    return Err(AmuseError::InvalidArgument(format!(
                        "eigenvectors {i},{j} not orthonormal: inner product {d}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Norm fractions of `v` inside the dominant subspace and its complement.
///
/// `r_dom` is the norm of the k projection coefficients over the norm of v;
/// `r_bulk = sqrt(1 - r_dom^2)` clamped at 0. By the orthogonal-projection
/// identity the two squares sum to 1.
pub fn dominant_ratio(v: &[f64], basis: &EigenBasis) -> Result<(f64, f64)> {
    if v.len() != basis.dim() {
        return Err(AmuseError::ShapeMismatch {
            context: "dominant_ratio".into(),
            expected: format!("{} elements", basis.dim()),
            actual: format!("{} elements", v.len()),
        });
    }
    let v_norm = norm(v);
    if v_norm == 0.0 {
        return Err(AmuseError::InvalidArgument(
            "dominant ratio of the zero vector is undefined".into(),
        ));
    }
    let coeff_sq: f64 = basis
        .eigenvectors
        .iter()
        .map(|u| {
            let c = dot(u, v);
            c * c
        })
        .sum();
    let r_dom = (coeff_sq.sqrt() / v_norm).min(1.0);
    let r_bulk = (1.0 - r_dom * r_dom).max(0.0).sqrt();
    Ok((r_dom, r_bulk))
}

/// `alpha P_k u + gamma P_k_perp u`: scales the dominant and bulk
/// components independently. `alpha = gamma = 1` returns u unchanged.
pub fn scale_update(u: &[f64], basis: &EigenBasis, alpha: f64, gamma: f64) -> Vec<f64> {
    assert_eq!(u.len(), basis.dim(), "scale_update length mismatch");
    if alpha == 1.0 && gamma == 1.0 {
        return u.to_vec();
    }
    // dominant part p = sum_i (u_i . u) u_i ; out = gamma u + (alpha - gamma) p
    let mut p = vec![0.0; u.len()];
    for evec in &basis.eigenvectors {
        let c = dot(evec, u);
        for (pe, ue) in p.iter_mut().zip(evec) {
            *pe += c * ue;
        }
    }
    u.iter()
        .zip(&p)
        .map(|(ue, pe)| gamma * ue + (alpha - gamma) * pe)
        .collect()
}
