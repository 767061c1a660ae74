//! Read-only gradient probes along the z-to-x interpolation line.
//!
//! The probe materializes virtual points `y^(alpha) = (1-alpha) z + alpha x`
//! into the model, measures the gradient there, and restores the model
//! bitwise. Training state (momentum, counters, the sequences themselves)
//! is never touched.

use crate::error::Result;
use crate::net::{Batch, HvpWorkspace, MlpModel};
use crate::optim::{interpolate_slots, slots_to_model, Optimizer};

use super::basis::{dominant_ratio, EigenBasis};
use super::lanczos::lanczos_topk;

/// Where the probe anchors the measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeAnchor {
    /// A fresh basis at each evaluation point (the theta-dependent reading
    /// of the subspace definitions). Default.
    EvalPoint,
    /// One basis at the model's current parameters, shared across alphas.
    Shared,
}

#[derive(Debug, Clone)]
pub struct AlphaProbeResult {
    pub alpha: f64,
    pub grad: Vec<f64>,
    pub r_dom: f64,
    pub r_bulk: f64,
}

/// Gradient and dominant ratio at each interpolation point.
///
/// `hessian_batch` feeds the basis (the full analysis set in practice),
/// `grad_batch` feeds the measured gradient. The model must currently hold
/// the training point y_t; it is restored bitwise before returning.
#[allow(clippy::too_many_arguments)]
pub fn grad_probe_alpha(
    model: &mut MlpModel,
    opt: &Optimizer,
    hessian_batch: &Batch,
    grad_batch: &Batch,
    alphas: &[f64],
    k: usize,
    lanczos_iters: usize,
    seed: u64,
    anchor: ProbeAnchor,
) -> Result<Vec<AlphaProbeResult>> {
    let saved = model.params_flat();
    let result = probe_inner(
        model,
        opt,
        hessian_batch,
        grad_batch,
        alphas,
        k,
        lanczos_iters,
        seed,
        anchor,
    );
    model.set_params_flat(&saved);
    result
}

#[allow(clippy::too_many_arguments)]
fn probe_inner(
    model: &mut MlpModel,
    opt: &Optimizer,
    hessian_batch: &Batch,
    grad_batch: &Batch,
    alphas: &[f64],
    k: usize,
    lanczos_iters: usize,
    seed: u64,
    anchor: ProbeAnchor,
) -> Result<Vec<AlphaProbeResult>> {
    let shared_basis = match anchor {
        ProbeAnchor::Shared => Some(basis_at_current(
            model,
            hessian_batch,
            k,
            lanczos_iters,
            seed,
        )?),
        ProbeAnchor::EvalPoint => None,
    };

    let mut out = Vec::with_capacity(alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        let point = interpolate_slots(&opt.state.z, &opt.state.x, alpha);
        slots_to_model(&point, model);
        let grad = model.backward(grad_batch)?.to_flat();
        let basis = match &shared_basis {
            Some(b) => b.clone(),
            None => basis_at_current(
                model,
                hessian_batch,
                k,
                lanczos_iters,
                crate::rng::substream(seed, i as u64),
            )?,
        };
        let (r_dom, r_bulk) = dominant_ratio(&grad, &basis)?;
        out.push(AlphaProbeResult {
            alpha,
            grad,
            r_dom,
            r_bulk,
        });
    }
    Ok(out)
}

/// Top-k basis of the Hessian at the model's current parameters.
///
/// When the requested iteration budget leaves a residual above the gate,
/// the Krylov space is deepened (doubling, up to 8x or the full dimension)
/// before giving up. Deterministic: the retry ladder is a pure function of
/// the inputs.
pub fn basis_at_current(
    model: &MlpModel,
    batch: &Batch,
    k: usize,
    lanczos_iters: usize,
    seed: u64,
) -> Result<EigenBasis> {
    let ws = HvpWorkspace::prepare(model, batch)?;
    let dim = model.num_params();
    let mut hvp = |v: &[f64]| ws.hvp(v);
    let anchor = model.params_flat();
    let mut iters = lanczos_iters.max(k).min(dim);
    let cap = (lanczos_iters * 8).min(dim);
    loop {
        match lanczos_topk(&mut hvp, dim, k, iters, seed, anchor.clone()) {
            Err(crate::error::AmuseError::NoConvergence { .. }) if iters < cap => {
                iters = (iters * 2).min(cap);
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_gaussian;
    use crate::net::Activation;
    use crate::optim::{OptimizerConfig, OptimizerKind};

    #[test]
    fn probe_is_read_only_and_endpoints_are_exact() {
        let ds = synthetic_gaussian(3, 120, 6, 3, 3.0).unwrap();
        let mut model = MlpModel::new(&[6, 10, 3], Activation::Tanh, 4).unwrap();
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SfMuon,
            lr: 0.05,
            amuse_beta1: 0.9,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let batch = ds.as_batch();
        for _ in 0..25 {
            opt.step(&mut model, &batch).unwrap();
        }

        let before = model.params_flat();
        let results = grad_probe_alpha(
            &mut model,
            &opt,
            &batch,
            &batch,
            &[0.0, 0.5, 1.0],
            3,
            40,
            9,
            ProbeAnchor::EvalPoint,
        )
        .unwrap();
        assert_eq!(model.params_flat(), before, "probe must restore bitwise");

        // alpha = 0 measures the gradient at z exactly.
        let z_flat = crate::linalg::vectorize(&opt.state.z);
        model.set_params_flat(&z_flat);
        let grad_at_z = model.backward(&batch).unwrap().to_flat();
        model.set_params_flat(&before);
        assert_eq!(results[0].grad, grad_at_z);

        for r in &results {
            assert!((r.r_dom * r.r_dom + r.r_bulk * r.r_bulk - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn probe_at_beta_matches_training_gradient() {
        let ds = synthetic_gaussian(5, 90, 5, 3, 2.0).unwrap();
        let mut model = MlpModel::new(&[5, 8, 3], Activation::Tanh, 6).unwrap();
        let beta = 0.7;
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SfSgd,
            lr: 0.1,
            amuse_beta1: beta,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let batch = ds.as_batch();
        for _ in 0..10 {
            opt.step(&mut model, &batch).unwrap();
        }
        // The model holds y = z + beta (x - z); probing alpha = beta lands
        // on the same point bit for bit.
        let results = grad_probe_alpha(
            &mut model,
            &opt,
            &batch,
            &batch,
            &[beta],
            2,
            30,
            10,
            ProbeAnchor::Shared,
        )
        .unwrap();
        let training_grad = model.backward(&batch).unwrap().to_flat();
        assert_eq!(results[0].grad, training_grad);
    }
}
