//! Metric records and deterministic CSV emission.

use crate::error::{AmuseError, Result};
use std::fmt::Write as _;
use std::path::Path;

/// One measurement record. Rows are emitted at the probe cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    /// Batch loss at the gradient-evaluation point.
    pub train_loss: f64,
    /// Full-set loss at the evaluation iterate (x for schedule-free kinds).
    pub eval_loss: f64,
    /// Dominant ratio of the parameter update (delta x for SF kinds).
    pub r_dom_update: f64,
    /// Dominant ratio of the gradient used by the step.
    pub r_dom_grad: f64,
    /// Norm of the evaluation-iterate update.
    pub update_norm: f64,
    /// Cosine between the previous and current evaluation-iterate updates.
    pub update_cosine: f64,
    pub beta_t: f64,
    pub omega_t: f64,
    pub eta_t: f64,
}

pub const CSV_HEADER: &str =
    "step,train_loss,eval_loss,r_dom_update,r_dom_grad,update_norm,update_cosine,beta_t,omega_t,eta_t";

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(128);
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.train_loss,
            self.eval_loss,
            self.r_dom_update,
            self.r_dom_grad,
            self.update_norm,
            self.update_cosine,
            self.beta_t,
            self.omega_t,
            self.eta_t
        );
        s
    }

    /// Field sanity: ratios in [0, 1], cosine in [-1, 1]. NaN marks a
    /// probe that was not enabled and is allowed.
    pub fn validate(&self, prev_step: Option<u64>) -> Result<()> {
        if let Some(p) = prev_step {
            if self.step <= p {
                return Err(AmuseError::InvalidArgument(format!(
                    "metric steps must increase: {} after {p}",
                    self.step
                )));
            }
        }
        for (name, v, lo, hi) in [
            ("r_dom_update", self.r_dom_update, 0.0, 1.0),
            ("r_dom_grad", self.r_dom_grad, 0.0, 1.0),
            ("update_cosine", self.update_cosine, -1.0, 1.0),
        ] {
            if !v.is_nan() && !(lo..=hi).contains(&v) {
                return Err(AmuseError::InvalidArgument(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Serializes rows with the fixed header.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn write_rows_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    std::fs::write(path, rows_to_csv(rows))
        .map_err(|e| AmuseError::io(format!("write {}", path.display()), e))
}

/// Companion record for the orthogonalization comparison (Muon kinds):
/// dominant ratios of the raw momentum and of the orthogonalized update.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceRow {
    pub step: u64,
    pub r_dom_momentum: f64,
    pub r_dom_orth: f64,
}

pub const SUBSPACE_CSV_HEADER: &str = "step,r_dom_momentum,r_dom_orth";

pub fn subspace_rows_to_csv(rows: &[SubspaceRow]) -> String {
    let mut out = String::from(SUBSPACE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.step, r.r_dom_momentum, r.r_dom_orth);
    }
    out
}

/// Companion record for the interpolation-point gradient probe.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRow {
    pub step: u64,
    pub alpha: f64,
    pub r_dom_grad: f64,
}

pub const ALPHA_CSV_HEADER: &str = "step,alpha,r_dom_grad";

pub fn alpha_rows_to_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from(ALPHA_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.step, r.alpha, r.r_dom_grad);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_stable() {
        let row = MetricRow {
            step: 50,
            train_loss: 2.302585092994046,
            eval_loss: 2.1,
            r_dom_update: 0.25,
            r_dom_grad: 0.5,
            update_norm: 1e-3,
            update_cosine: -0.5,
            beta_t: 0.8,
            omega_t: 0.1,
            eta_t: 0.01,
        };
        let a = row.to_csv_line();
        let b = row.clone().to_csv_line();
        assert_eq!(a, b);
        assert!(a.starts_with("50,2.302585092994046,"));
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut row = MetricRow {
            step: 10,
            train_loss: 1.0,
            eval_loss: 1.0,
            r_dom_update: 0.5,
            r_dom_grad: 0.5,
            update_norm: 1.0,
            update_cosine: 0.0,
            beta_t: 0.0,
            omega_t: 1.0,
            eta_t: 0.1,
        };
        row.validate(None).unwrap();
        assert!(row.validate(Some(10)).is_err());
        row.r_dom_update = 1.5;
        assert!(row.validate(None).is_err());
    }
}
