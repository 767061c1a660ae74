//! Post-hoc river-proximity probes: exponential weight averaging over a
//! checkpoint stream and a learning-rate decay continuation.

use crate::data::Dataset;
use crate::error::{AmuseError, Result};
use crate::net::MlpModel;
use crate::optim::{LrSchedule, Optimizer};

/// EWA over parameter snapshots: `theta_bar <- coeff theta_bar +
/// (1-coeff) theta`, seeded at the first snapshot; returns the evaluation
/// loss at each averaged point.
pub fn ewa_trace(
    model_template: &MlpModel,
    ds: &Dataset,
    snapshots: &[Vec<f64>],
    coeff: f64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&coeff) {
        return Err(AmuseError::InvalidArgument(format!(
            "EWA coefficient {coeff} outside (0, 1)"
        )));
    }
    if snapshots.is_empty() {
        return Ok(Vec::new());
    }
    let mut model = model_template.clone();
    let full = ds.as_batch();
    let mut avg = snapshots[0].clone();
    let mut out = Vec::with_capacity(snapshots.len());
    for (i, snap) in snapshots.iter().enumerate() {
        if i > 0 {
            for (a, s) in avg.iter_mut().zip(snap) {
                *a = coeff * *a + (1.0 - coeff) * s;
            }
        }
        model.set_params_flat(&avg);
        out.push(model.forward_loss(&full)?);
    }
    Ok(out)
}

/// The averaged parameter sequence itself (same recursion as
/// [`ewa_trace`]), for tests that pin the trajectory rather than the loss.
pub fn ewa_params(snapshots: &[Vec<f64>], coeff: f64) -> Vec<Vec<f64>> {
    if snapshots.is_empty() {
        return Vec::new();
    }
    let mut avg = snapshots[0].clone();
    let mut out = vec![avg.clone()];
    for snap in &snapshots[1..] {
        for (a, s) in avg.iter_mut().zip(snap) {
            *a = coeff * *a + (1.0 - coeff) * s;
        }
        out.push(avg.clone());
    }
    out
}

/// Continues training from a constant-lr state while the learning rate
/// decays linearly from `eta_start` to 0 over `decay_steps`; returns the
/// full-set loss after each decayed step (index 0 is the starting loss).
pub fn decay_probe(
    model: &mut MlpModel,
    opt: &mut Optimizer,
    ds: &Dataset,
    eta_start: f64,
    decay_steps: u64,
    data_seed: u64,
    batch_size: usize,
) -> Result<Vec<f64>> {
    if decay_steps == 0 {
        return Err(AmuseError::InvalidArgument(
            "decay_steps must be positive".into(),
        ));
    }
    // Rebase the schedule: fresh step counter, linear decay to zero, no
    // warmup. Momentum and sequence buffers carry over.
    opt.cfg.lr = eta_start;
    opt.cfg.aux_lr = None;
    opt.cfg.warmup_steps = 1;
    opt.cfg.lr_schedule = LrSchedule::LinearDecay {
        end_lr: 0.0,
        total_steps: decay_steps,
    };
    opt.state.t = 0;

    let full = ds.as_batch();
    let mut losses = vec![model.forward_loss(&full)?];
    let batches_per_epoch = ds.len().div_ceil(batch_size) as u64;
    let mut epoch_batches = Vec::new();
    let mut current_epoch = u64::MAX;
    for t in 1..=decay_steps {
        let epoch = (t - 1) / batches_per_epoch;
        if epoch != current_epoch {
            epoch_batches = crate::data::batches(ds, batch_size, data_seed, epoch);
            current_epoch = epoch;
        }
        let batch = &epoch_batches[((t - 1) % batches_per_epoch) as usize];
        opt.step(model, batch)?;
        let saved = model.params_flat();
        let eval = opt.eval_params_flat(model);
        model.set_params_flat(&eval);
        losses.push(model.forward_loss(&full)?);
        model.set_params_flat(&saved);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_gaussian;
    use crate::net::Activation;
    use crate::optim::{OptimizerConfig, OptimizerKind};

    #[test]
    fn scalar_unroll_matches_hand_computation() {
        let snaps = vec![vec![1.0], vec![2.0], vec![3.0]];
        let traj = ewa_params(&snaps, 0.5);
        assert_eq!(traj, vec![vec![1.0], vec![1.5], vec![2.25]]);
    }

    #[test]
    fn small_coeff_tracks_the_trajectory() {
        let snaps = vec![vec![1.0, -1.0], vec![5.0, 2.0]];
        let traj = ewa_params(&snaps, 1e-12);
        assert!((traj[1][0] - 5.0).abs() < 1e-9);
        assert!((traj[1][1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_trajectory_is_a_fixed_point() {
        let snaps = vec![vec![0.7; 4]; 5];
        let traj = ewa_params(&snaps, 0.9);
        for p in traj {
            assert_eq!(p, vec![0.7; 4]);
        }
    }

    #[test]
    fn ewa_trace_evaluates_losses() {
        let ds = synthetic_gaussian(1, 60, 6, 3, 3.0).unwrap();
        let model = MlpModel::new(&[6, 8, 3], Activation::Tanh, 3).unwrap();
        let snaps = vec![model.params_flat(), model.params_flat()];
        let losses = ewa_trace(&model, &ds, &snaps, 0.5).unwrap();
        assert_eq!(losses.len(), 2);
        assert_eq!(losses[0], losses[1]);
        assert!(ewa_trace(&model, &ds, &snaps, 1.0).is_err());
    }

    #[test]
    fn decay_probe_single_near_zero_step_barely_moves() {
        let ds = synthetic_gaussian(2, 80, 6, 3, 3.0).unwrap();
        let mut model = MlpModel::new(&[6, 8, 3], Activation::Tanh, 5).unwrap();
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Muon,
            lr: 0.05,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let full = ds.as_batch();
        for _ in 0..30 {
            opt.step(&mut model, &full).unwrap();
        }
        // Constant-lr reference step change.
        let mut m_ref = model.clone();
        let mut o_ref = Optimizer::new(&m_ref, opt.cfg.clone()).unwrap();
        o_ref.state.slots = opt.state.slots.clone();
        let before = m_ref.forward_loss(&full).unwrap();
        o_ref.step(&mut m_ref, &full).unwrap();
        let const_change = (m_ref.forward_loss(&full).unwrap() - before).abs();

        // One decayed step: the schedule puts eta at its endpoint, 0.
        let losses = decay_probe(&mut model, &mut opt, &ds, 0.05, 1, 9, 80).unwrap();
        let decay_change = (losses[1] - losses[0]).abs();
        assert!(
            decay_change <= const_change,
            "decay {decay_change} vs constant {const_change}"
        );
        assert!(decay_change < 1e-12, "single step decays lr to zero");
    }
}
