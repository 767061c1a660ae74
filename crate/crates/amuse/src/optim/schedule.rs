//! Learning-rate, averaging-coefficient, and interpolation schedules.
//!
//! Steps are 1-based throughout. The averaging coefficient convention
//! follows the full update loop: at step t the x-update uses `c_{t+1}`,
//! and the interpolation coefficient `beta_t` is evaluated against `c_t`.
//! `c_1 = 1` by convention (x_1 = z_1).

use super::config::{AveragingMode, LrSchedule, OptimizerConfig};
use std::f64::consts::PI;

/// Linear warmup factor `min(1, t/T0)`.
pub fn warmup_factor(t: u64, warmup_steps: u64) -> f64 {
    debug_assert!(t >= 1 && warmup_steps >= 1);
    (t as f64 / warmup_steps as f64).min(1.0)
}

/// Post-warmup multiplier of the configured schedule.
fn schedule_factor(schedule: LrSchedule, t: u64, warmup_steps: u64) -> f64 {
    match schedule {
        LrSchedule::Constant => 1.0,
        LrSchedule::Cosine { total_steps } => {
            if t <= warmup_steps {
                1.0
            } else if t >= total_steps {
                0.0
            } else {
                let span = (total_steps - warmup_steps) as f64;
                let progress = (t - warmup_steps) as f64 / span;
                0.5 * (1.0 + (PI * progress).cos())
            }
        }
        LrSchedule::LinearDecay { .. } => 1.0, // handled in lr_at, it targets an lr value
    }
}

/// The effective learning rate at step t: warmup, then the schedule.
pub fn lr_at(cfg: &OptimizerConfig, t: u64) -> f64 {
    let w = warmup_factor(t, cfg.warmup_steps);
    match cfg.lr_schedule {
        LrSchedule::LinearDecay {
            end_lr,
            total_steps,
        } => {
            if t >= total_steps {
                end_lr
            } else if t <= cfg.warmup_steps {
                cfg.lr * w
            } else {
                let span = (total_steps - cfg.warmup_steps) as f64;
                let progress = (t - cfg.warmup_steps) as f64 / span;
                cfg.lr + (end_lr - cfg.lr) * progress
            }
        }
        other => cfg.lr * w * schedule_factor(other, t, cfg.warmup_steps),
    }
}

/// Auxiliary-group learning rate; same shape, scaled to `aux_lr`.
pub fn aux_lr_at(cfg: &OptimizerConfig, t: u64) -> f64 {
    lr_at(cfg, t) * (cfg.aux_lr() / cfg.lr)
}

/// Averaging coefficient `c_{t+1}` given the running sum of squared
/// learning rates through step t (inclusive).
pub fn averaging_coeff(mode: AveragingMode, t: u64, eta_t: f64, sum_eta_sq: f64) -> f64 {
    match mode {
        AveragingMode::LrWeighted => {
            debug_assert!(sum_eta_sq > 0.0);
            eta_t * eta_t / sum_eta_sq
        }
        AveragingMode::Simple => 1.0 / (t as f64 + 1.0),
        AveragingMode::Frozen => 0.0,
    }
}

/// The interpolation schedule in its `(T0-1)/(t-1)` form (the constant
/// learning-rate reduction of the exact-c formulation).
pub fn beta_eq4(t: u64, warmup_steps: u64, beta1: f64, rho: f64) -> f64 {
    if t <= warmup_steps {
        return beta1;
    }
    let ratio = (warmup_steps as f64 - 1.0) / (t as f64 - 1.0);
    1.0 - ratio.powf(rho) * (1.0 - beta1)
}

/// The interpolation schedule computed from the exact averaging
/// coefficients: `beta_t = 1 - (c_t (1 - c_T0) / (c_T0 (1 - c_t)))^rho (1 - beta_1)`.
pub fn beta_exact_c(c_t: f64, c_t0: f64, beta1: f64, rho: f64) -> f64 {
    let ratio = (c_t * (1.0 - c_t0)) / (c_t0 * (1.0 - c_t));
    1.0 - ratio.powf(rho) * (1.0 - beta1)
}

/// beta at a given step for a full configuration.
///
/// During warmup beta is held at beta_1; afterwards the exact-c form is
/// used with the cached c_T0. Fixed-beta kinds pass rho = 0 and reduce to
/// beta_1 identically.
pub fn beta_at(cfg: &OptimizerConfig, t: u64, c_t: f64, c_t0: Option<f64>) -> f64 {
    let rho = cfg.effective_rho();
    if t <= cfg.warmup_steps || rho == 0.0 {
        return cfg.amuse_beta1;
    }
    let c_t0 = c_t0.expect("c_T0 must be cached once t exceeds the warmup");
    beta_exact_c(c_t, c_t0, cfg.amuse_beta1, rho)
}

/// Effective per-step averaging weight of y_t in x_t.
///
/// General form `omega_t = c_t / (1 - beta_t (1 - c_t))`; with `c_t = 1/t`
/// this is `1 / ((t-1)(1-beta_t) + 1)`.
pub fn omega_t(c_t: f64, beta_t: f64) -> f64 {
    c_t / (1.0 - beta_t * (1.0 - c_t))
}

/// omega and the unrolled weights alpha_t of each y_t in the final x_T.
///
/// `beta_history[t-1]` is beta_t and `c_history[t-1]` is c_t (so
/// `c_history[0]` must be 1). The alphas form an affine combination:
/// their sum is 1 up to rounding.
#[derive(Debug, Clone)]
pub struct EffectiveWeights {
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn effective_weights(beta_history: &[f64], c_history: &[f64]) -> EffectiveWeights {
    assert_eq!(beta_history.len(), c_history.len(), "aligned histories");
    let t_max = beta_history.len();
    let omega: Vec<f64> = (0..t_max)
        .map(|i| omega_t(c_history[i], beta_history[i]))
        .collect();
    // alpha_t = omega_t * prod_{s > t} (1 - omega_s), accumulated right-to-left.
    let mut alpha = vec![0.0; t_max];
    let mut tail = 1.0;
    for t in (0..t_max).rev() {
        alpha[t] = omega[t] * tail;
        tail *= 1.0 - omega[t];
    }
    EffectiveWeights { omega, alpha }
}

/// c history `[1, 1/2, 1/3, ...]` of the simple averaging mode.
pub fn c_history_simple(t_max: usize) -> Vec<f64> {
    (1..=t_max).map(|t| 1.0 / t as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::config::OptimizerKind;

    fn cfg_with(warmup: u64, schedule: LrSchedule) -> OptimizerConfig {
        OptimizerConfig {
            lr: 1.0,
            warmup_steps: warmup,
            lr_schedule: schedule,
            ..Default::default()
        }
    }

    #[test]
    fn warmup_midpoint_is_half() {
        let cfg = cfg_with(100, LrSchedule::Constant);
        assert_eq!(lr_at(&cfg, 50), 0.5);
        assert_eq!(lr_at(&cfg, 100), 1.0);
        assert_eq!(lr_at(&cfg, 5000), 1.0);
    }

    #[test]
    fn cosine_reaches_zero_at_final_step() {
        let cfg = cfg_with(10, LrSchedule::Cosine { total_steps: 1000 });
        assert!(lr_at(&cfg, 1000).abs() < 1e-12);
        assert!(lr_at(&cfg, 10) == 1.0);
        assert!(lr_at(&cfg, 500) < 1.0);
    }

    #[test]
    fn linear_decay_hits_endpoints() {
        let cfg = cfg_with(
            1,
            LrSchedule::LinearDecay {
                end_lr: 0.0,
                total_steps: 101,
            },
        );
        assert_eq!(lr_at(&cfg, 1), 1.0);
        assert_eq!(lr_at(&cfg, 101), 0.0);
        assert!((lr_at(&cfg, 51) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn averaging_coeff_constant_lr_is_one_over_t() {
        // c_2 = 1 at t = 1, c_11 = 0.1 at t = 10 under constant eta.
        let eta = 0.37;
        let mut sum = 0.0;
        let mut cs = Vec::new();
        for t in 1..=10u64 {
            sum += eta * eta;
            cs.push(averaging_coeff(AveragingMode::LrWeighted, t, eta, sum));
        }
        assert_eq!(cs[0], 1.0);
        assert!((cs[9] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn averaging_coeff_weights_by_squared_lr() {
        // Warmup lrs 1, 2, 3: c_4 = 9 / (1 + 4 + 9) = 9/14.
        let sum = 1.0 + 4.0 + 9.0;
        let c4 = averaging_coeff(AveragingMode::LrWeighted, 3, 3.0, sum);
        assert!((c4 - 9.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn beta_is_fixed_when_rho_is_zero() {
        for t in [1u64, 2, 100, 10_000] {
            assert_eq!(beta_eq4(t, 2000, 0.8, 0.0), 0.8);
        }
    }

    #[test]
    fn beta_pinned_value_at_3999() {
        // T0 = 2000, rho = 1, beta1 = 0.8, t = 3999: the ratio is exactly
        // one half, so beta is exactly 0.9.
        let beta = beta_eq4(3999, 2000, 0.8, 1.0);
        assert_eq!(beta, 0.9);
        // The exact-c form with c_t = 1/t agrees.
        let beta_c = beta_exact_c(1.0 / 3999.0, 1.0 / 2000.0, 0.8, 1.0);
        assert!((beta_c - 0.9).abs() < 1e-12);
    }

    #[test]
    fn beta_continuous_at_warmup_boundary() {
        let b = beta_eq4(2000, 2000, 0.85, 0.7);
        assert_eq!(b, 0.85);
        let just_after = beta_eq4(2001, 2000, 0.85, 0.7);
        assert!((just_after - 0.85).abs() < 1e-3);
        assert!(just_after >= 0.85);
    }

    #[test]
    fn exact_c_reduces_to_ratio_form_for_harmonic_c() {
        for &(t0, rho, beta1) in &[(2000u64, 1.0, 0.8), (50, 0.5, 0.6), (10, 0.25, 0.9)] {
            for t in (t0 + 1)..(t0 + 1000) {
                let a = beta_eq4(t, t0, beta1, rho);
                let b = beta_exact_c(1.0 / t as f64, 1.0 / t0 as f64, beta1, rho);
                assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn omega_starts_at_one_and_alphas_sum_to_one() {
        let t_max = 500;
        for rho in [0.0, 0.5, 1.0] {
            let betas: Vec<f64> = (1..=t_max as u64)
                .map(|t| beta_eq4(t, 20, 0.8, rho))
                .collect();
            let cs = c_history_simple(t_max);
            let w = effective_weights(&betas, &cs);
            assert_eq!(w.omega[0], 1.0);
            assert!((w.omega[1] - 5.0 / 6.0).abs() < 1e-15 || rho > 0.0);
            let sum: f64 = w.alpha.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "rho={rho}: sum {sum}");
            assert!(w.omega.iter().all(|&o| o > 0.0 && o <= 1.0));
        }
    }

    #[test]
    fn omega_two_with_constant_beta() {
        // beta_2 = 0.8 gives omega_2 = 1 / (1 * 0.2 + 1) = 5/6.
        let w = effective_weights(&[0.8, 0.8], &c_history_simple(2));
        assert!((w.omega[1] - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rho_one_freezes_omega_after_warmup() {
        let t0 = 50u64;
        let t_max = 400usize;
        let betas: Vec<f64> = (1..=t_max as u64)
            .map(|t| beta_eq4(t, t0, 0.8, 1.0))
            .collect();
        let w = effective_weights(&betas, &c_history_simple(t_max));
        let pivot = w.omega[t0 as usize - 1];
        for t in (t0 as usize)..t_max {
            assert!(
                (w.omega[t] - pivot).abs() < 1e-12,
                "omega at t={} drifted: {} vs {}",
                t + 1,
                w.omega[t],
                pivot
            );
        }
    }

    #[test]
    fn beta_monotone_and_below_one_omega_non_increasing() {
        let t0 = 100u64;
        for rho in [0.25, 0.5, 1.0] {
            let betas: Vec<f64> = (1..=5000u64).map(|t| beta_eq4(t, t0, 0.7, rho)).collect();
            for t in (t0 as usize)..betas.len() {
                assert!(betas[t] < 1.0);
                if t > t0 as usize {
                    assert!(betas[t] >= betas[t - 1] - 1e-15);
                }
            }
            let w = effective_weights(&betas, &c_history_simple(betas.len()));
            // The 1 - beta round trip through the beta history loses ~1e-14
            // relative precision, so monotonicity is asserted up to that.
            for t in (t0 as usize)..w.omega.len() {
                assert!(
                    w.omega[t] <= w.omega[t - 1] * (1.0 + 1e-12),
                    "rho={rho} t={t}: {} > {}",
                    w.omega[t],
                    w.omega[t - 1]
                );
            }
        }
    }

    #[test]
    fn beta_at_is_horizon_independent() {
        // The schedule consults only (t, T0, beta1, rho, c history), never a
        // total step count.
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Amuse,
            amuse_beta1: 0.6,
            amuse_rho: 0.8,
            warmup_steps: 10,
            ..Default::default()
        };
        let c_t0 = 1.0 / 10.0;
        let beta_short = beta_at(&cfg, 500, 1.0 / 500.0, Some(c_t0));
        let beta_long = beta_at(&cfg, 500, 1.0 / 500.0, Some(c_t0));
        assert_eq!(beta_short, beta_long);
    }
}
