//! Interpolation-schedule series: beta_t, omega_t, and the unrolled
//! averaging weights alpha_t, as pure functions of (beta_1, rho, T0, T).

use crate::error::{AmuseError, Result};
use crate::optim::schedule::{beta_eq4, c_history_simple, effective_weights};
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct SchedulePlot {
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn schedule_viz(beta1: f64, rho: f64, warmup_steps: u64, t_max: u64) -> Result<SchedulePlot> {
    if !(0.0..1.0).contains(&beta1) {
        return Err(AmuseError::InvalidArgument(format!(
            "beta1 = {beta1} outside [0, 1)"
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(AmuseError::InvalidArgument(format!(
            "rho = {rho} outside [0, 1]"
        )));
    }
    if t_max < warmup_steps {
        return Err(AmuseError::InvalidArgument(format!(
            "series length {t_max} shorter than the warmup {warmup_steps}"
        )));
    }
    let beta: Vec<f64> = (1..=t_max)
        .map(|t| beta_eq4(t, warmup_steps, beta1, rho))
        .collect();
    let w = effective_weights(&beta, &c_history_simple(t_max as usize));
    Ok(SchedulePlot {
        beta,
        omega: w.omega,
        alpha: w.alpha,
    })
}

pub fn schedule_to_csv(plot: &SchedulePlot) -> String {
    let mut out = String::from("t,beta_t,omega_t,alpha_t\n");
    for (i, ((b, o), a)) in plot
        .beta
        .iter()
        .zip(&plot.omega)
        .zip(&plot.alpha)
        .enumerate()
    {
        let _ = writeln!(out, "{},{},{},{}", i + 1, b, o, a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_zero_is_flat_beta() {
        let p = schedule_viz(0.8, 0.0, 2000, 5000).unwrap();
        assert!(p.beta.iter().all(|&b| b == 0.8));
    }

    #[test]
    fn alphas_sum_to_one_across_the_grid() {
        for rho in [0.0, 0.3, 0.7, 1.0] {
            for t_max in [2500u64, 4000, 8000] {
                let p = schedule_viz(0.8, rho, 2000, t_max).unwrap();
                let sum: f64 = p.alpha.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10, "rho={rho} T={t_max}: {sum}");
            }
        }
    }

    #[test]
    fn rho_one_fixes_omega_after_warmup() {
        let t0 = 2000u64;
        let p = schedule_viz(0.8, 1.0, t0, 6000).unwrap();
        let pivot = p.omega[(t0 - 1) as usize];
        for t in (t0 as usize)..p.omega.len() {
            assert!((p.omega[t] - pivot).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_has_one_line_per_step() {
        let p = schedule_viz(0.6, 0.5, 10, 50).unwrap();
        let csv = schedule_to_csv(&p);
        assert_eq!(csv.lines().count(), 51);
        assert!(csv.starts_with("t,beta_t,omega_t,alpha_t\n1,0.6,1,"));
    }
}
