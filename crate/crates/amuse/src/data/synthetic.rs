//! Synthetic Gaussian-mixture classification task.
//!
//! Offline stand-in for MNIST-style subsets: k isotropic unit Gaussians
//! with pairwise mean distance equal to `separation`, labels assigned
//! round-robin, features min-max scaled into [0, 1] by one global affine
//! map (so cluster geometry is preserved up to a uniform rescaling).

use crate::error::{AmuseError, Result};
use crate::linalg::DenseMatrix;
use crate::rng::AmuseRng;

use super::Dataset;

pub fn synthetic_gaussian(
    seed: u64,
    n: usize,
    d: usize,
    k: usize,
    separation: f64,
) -> Result<Dataset> {
    if k < 2 {
        return Err(AmuseError::InvalidArgument(
            "synthetic_gaussian needs at least 2 classes".into(),
        ));
    }
    if d < k {
        return Err(AmuseError::InvalidArgument(format!(
            "feature dim {d} must be at least the class count {k}"
        )));
    }
    if n < k {
        return Err(AmuseError::InvalidArgument(format!(
            "sample count {n} must cover all {k} classes"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(AmuseError::InvalidArgument(
            "separation must be finite and non-negative".into(),
        ));
    }

    // Means at (separation / sqrt(2)) * e_c have pairwise distance equal to
    // `separation` exactly.
    let coord = separation / std::f64::consts::SQRT_2;
    let mut rng = AmuseRng::for_stream(seed, 0x6761757373); // "gauss"
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        labels.push(class);
        for j in 0..d {
            let mean = if j == class { coord } else { 0.0 };
            data.push(mean + rng.normal());
        }
    }

    // One global min-max map into [0, 1].
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    for x in &mut data {
        *x = (*x - lo) / span;
    }

    let inputs = DenseMatrix::new(n, d, data)?;
    Dataset::new(inputs, labels, k)
}
