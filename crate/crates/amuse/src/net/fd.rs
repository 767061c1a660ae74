//! Finite-difference oracles for gradients and Hessian-vector products.
//!
//! Test machinery, kept independent of the reverse-mode path it checks:
//! everything here goes through `forward_loss` (or `backward`, for the HVP
//! oracle) on perturbed copies of the model.

use crate::error::{AmuseError, Result};
use crate::net::mlp::{Batch, MlpModel};

fn check_step(h: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(AmuseError::InvalidArgument(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }
    Ok(())
}

/// Central-difference gradient over all coordinates.
pub fn finite_diff_grad(model: &MlpModel, batch: &Batch, h: f64) -> Result<Vec<f64>> {
    let coords: Vec<usize> = (0..model.num_params()).collect();
    finite_diff_grad_at(model, batch, h, &coords)
}

/// Central-difference gradient on a coordinate subset.
///
/// Returns one value per requested coordinate, in request order.
pub fn finite_diff_grad_at(
    model: &MlpModel,
    batch: &Batch,
    h: f64,
    coords: &[usize],
) -> Result<Vec<f64>> {
    check_step(h)?;
    let mut work = model.clone();
    let base = model.params_flat();
    let mut out = Vec::with_capacity(coords.len());
    let mut theta = base.clone();
    for &c in coords {
        let orig = theta[c];
        theta[c] = orig + h;
        work.set_params_flat(&theta);
        let plus = work.forward_loss(batch)?;
        theta[c] = orig - h;
        work.set_params_flat(&theta);
        let minus = work.forward_loss(batch)?;
        theta[c] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Finite-difference Hessian-vector product:
/// `(grad(theta + h v) - grad(theta - h v)) / (2 h)`.
pub fn finite_diff_hvp(model: &MlpModel, batch: &Batch, v: &[f64], h: f64) -> Result<Vec<f64>> {
    check_step(h)?;
    if v.len() != model.num_params() {
        return Err(AmuseError::ShapeMismatch {
            context: "finite_diff_hvp direction".into(),
            expected: format!("{} elements", model.num_params()),
            actual: format!("{} elements", v.len()),
        });
    }
    let base = model.params_flat();
    let mut work = model.clone();

    let shifted: Vec<f64> = base.iter().zip(v).map(|(p, d)| p + h * d).collect();
    work.set_params_flat(&shifted);
    let g_plus = work.backward(batch)?.to_flat();

    let shifted: Vec<f64> = base.iter().zip(v).map(|(p, d)| p - h * d).collect();
    work.set_params_flat(&shifted);
    let g_minus = work.backward(batch)?.to_flat();

    Ok(g_plus
        .iter()
        .zip(&g_minus)
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::net::mlp::Activation;
    use crate::rng::AmuseRng;

    fn random_batch(n: usize, d: usize, k: usize, seed: u64) -> Batch {
        let mut rng = AmuseRng::seed_from_u64(seed);
        let inputs = DenseMatrix::from_fn(n, d, |_, _| rng.uniform(0.0, 1.0));
        let labels = (0..n).map(|i| i % k).collect();
        Batch::new(inputs, labels).unwrap()
    }

    #[test]
    fn rejects_out_of_range_step() {
        let model = MlpModel::new(&[2, 2], Activation::Tanh, 0).unwrap();
        let batch = random_batch(2, 2, 2, 0);
        assert!(finite_diff_grad(&model, &batch, 1e-2).is_err());
        assert!(finite_diff_grad(&model, &batch, 1e-8).is_err());
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        // With duplicated inputs assigned once to each of the two classes the
        // mean cross-entropy is flat in the softmax margin direction of the
        // output bias difference; more simply, a frozen all-zero model on any
        // batch has gradient zero in every weight fed by zero activations.
        // Here: zero inputs mean layer0 weight gradients vanish identically.
        let model = MlpModel::new(&[3, 2], Activation::Tanh, 4).unwrap();
        let batch = Batch::new(DenseMatrix::zeros(4, 3), vec![0, 1, 0, 1]).unwrap();
        let fd = finite_diff_grad(&model, &batch, 1e-4).unwrap();
        // layer0 weights occupy the first 6 slots.
        for &g in &fd[..6] {
            assert!(g.abs() < 1e-9, "gradient {g}");
        }
    }

    #[test]
    fn matches_backward_on_random_model() {
        let model = MlpModel::new(&[4, 6, 3], Activation::Tanh, 11).unwrap();
        let batch = random_batch(5, 4, 3, 12);
        let exact = model.backward(&batch).unwrap().to_flat();
        let fd = finite_diff_grad(&model, &batch, 1e-5).unwrap();
        for (i, (e, f)) in exact.iter().zip(&fd).enumerate() {
            let denom = e.abs().max(1e-6);
            assert!(
                (e - f).abs() / denom < 1e-5,
                "coord {i}: exact {e}, fd {f}"
            );
        }
    }

    #[test]
    fn hvp_matches_finite_difference_hvp() {
        let model = MlpModel::new(&[4, 6, 5, 3], Activation::Tanh, 31).unwrap();
        let batch = random_batch(7, 4, 3, 32);
        let mut rng = AmuseRng::seed_from_u64(33);
        for _ in 0..3 {
            let v = rng.unit_vector(model.num_params());
            let exact = model.hvp(&batch, &v).unwrap();
            let fd = finite_diff_hvp(&model, &batch, &v, 1e-4).unwrap();
            let scale = exact.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
            for (e, f) in exact.iter().zip(&fd) {
                assert!(
                    (e - f).abs() / scale < 1e-4,
                    "hvp mismatch: exact {e}, fd {f}"
                );
            }
        }
    }

    #[test]
    fn hvp_is_symmetric_and_linear() {
        let model = MlpModel::new(&[3, 5, 4, 2], Activation::Tanh, 41).unwrap();
        let batch = random_batch(6, 3, 2, 42);
        let mut rng = AmuseRng::seed_from_u64(43);
        let dim = model.num_params();
        let u = rng.unit_vector(dim);
        let v = rng.unit_vector(dim);
        let hu = model.hvp(&batch, &u).unwrap();
        let hv = model.hvp(&batch, &v).unwrap();
        let uhv: f64 = u.iter().zip(&hv).map(|(a, b)| a * b).sum();
        let vhu: f64 = v.iter().zip(&hu).map(|(a, b)| a * b).sum();
        let hv_norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(
            (uhv - vhu).abs() / hv_norm.max(1e-12) < 1e-8,
            "symmetry defect {}",
            (uhv - vhu).abs()
        );

        let (alpha, beta) = (0.7, -1.3);
        let combo: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let h_combo = model.hvp(&batch, &combo).unwrap();
        for ((hc, a), b) in h_combo.iter().zip(&hu).zip(&hv) {
            let lin = alpha * a + beta * b;
            assert!(
                (hc - lin).abs() <= 1e-10 * lin.abs().max(1.0),
                "linearity defect: {hc} vs {lin}"
            );
        }
    }

    #[test]
    fn central_difference_is_second_order() {
        // Richardson-style order check on the tanh network (third derivative
        // nonzero). Errors at h and h/10 should shrink by about 100x; the
        // band is wide because roundoff contaminates the smaller step.
        let model = MlpModel::new(&[3, 5, 2], Activation::Tanh, 21).unwrap();
        let batch = random_batch(6, 3, 2, 22);
        let exact = model.backward(&batch).unwrap().to_flat();
        let err_at = |h: f64| -> f64 {
            let fd = finite_diff_grad(&model, &batch, h).unwrap();
            exact
                .iter()
                .zip(&fd)
                .map(|(e, f)| (e - f).abs())
                .fold(0.0f64, f64::max)
        };
        let e3 = err_at(1e-3);
        let e4 = err_at(1e-4);
        let ratio = e3 / e4;
        assert!(
            (20.0..500.0).contains(&ratio),
            "order ratio {ratio} (errors {e3:.3e}, {e4:.3e})"
        );
    }
}
