//! Optimizer configuration and validation.

use crate::error::{AmuseError, Result};
use crate::linalg::newton_schulz::MUON_FAST_ITERS;
use crate::linalg::NsCoeffs;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adamw,
    Muon,
    SfSgd,
    SfAdamw,
    SfMuon,
    Amuse,
}

impl OptimizerKind {
    /// Three-sequence (y, z, x) kinds.
    pub fn is_schedule_free(self) -> bool {
        matches!(
            self,
            OptimizerKind::SfSgd
                | OptimizerKind::SfAdamw
                | OptimizerKind::SfMuon
                | OptimizerKind::Amuse
        )
    }

    /// Kinds that route matrix parameters through orthogonalized momentum.
    pub fn uses_muon(self) -> bool {
        matches!(
            self,
            OptimizerKind::Muon | OptimizerKind::SfMuon | OptimizerKind::Amuse
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adamw => "adamw",
            OptimizerKind::Muon => "muon",
            OptimizerKind::SfSgd => "sf_sgd",
            OptimizerKind::SfAdamw => "sf_adamw",
            OptimizerKind::SfMuon => "sf_muon",
            OptimizerKind::Amuse => "amuse",
        }
    }
}

/// Base optimizer for the non-Muon (auxiliary) parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    Sgd,
    Adamw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    Cosine { total_steps: u64 },
    LinearDecay { end_lr: f64, total_steps: u64 },
}

/// How the averaging coefficient `c_{t+1}` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// `c_{t+1} = eta_t^2 / sum_{i<=t} eta_i^2` (the implementation form;
    /// equals `1/t` once the learning rate is constant).
    LrWeighted,
    /// `c_{t+1} = 1/(t+1)` (the simple form; plain running mean of z).
    Simple,
    /// `c == 0`: the averaged sequence never moves. Test/diagnostic mode.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    /// Warmup steps T0; also the pivot of the interpolation schedule.
    pub warmup_steps: u64,
    /// Muon momentum mu.
    pub muon_momentum: f64,
    /// Heavy-ball coefficient for standalone SGD (and the Muon aux group).
    pub sgd_momentum: f64,
    pub adamw_beta1: f64,
    pub adamw_beta2: f64,
    pub adamw_eps: f64,
    /// Interpolation coefficient beta_1 (fixed beta for the SF kinds).
    pub amuse_beta1: f64,
    /// Schedule exponent rho in [0, 1]; 0 reduces to fixed beta.
    pub amuse_rho: f64,
    /// Optional global-norm bound applied to raw gradients.
    pub grad_clip: Option<f64>,
    pub lr_schedule: LrSchedule,
    /// Use mu*M_t + G_t as the orthogonalization input.
    pub nesterov: bool,
    pub ns_iters: usize,
    pub ns_coeffs: NsCoeffs,
    /// Multiply orthogonalized updates by sqrt(max(rows, cols)).
    pub muon_rms_scale: bool,
    /// Base optimizer for the auxiliary group of Muon-family kinds.
    pub aux_kind: AuxKind,
    /// Learning rate for the auxiliary group; defaults to `lr`.
    pub aux_lr: Option<f64>,
    pub averaging: AveragingMode,
    /// Whether the first weight matrix is Muon-eligible.
    pub muon_include_first: bool,
    /// Whether the last weight matrix (classifier head) is Muon-eligible.
    pub muon_include_last: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Muon,
            lr: 1e-3,
            weight_decay: 0.0,
            warmup_steps: 1,
            muon_momentum: 0.9,
            sgd_momentum: 0.0,
            adamw_beta1: 0.9,
            adamw_beta2: 0.99,
            adamw_eps: 1e-8,
            amuse_beta1: 0.8,
            amuse_rho: 0.0,
            grad_clip: None,
            lr_schedule: LrSchedule::Constant,
            nesterov: false,
            ns_iters: MUON_FAST_ITERS,
            ns_coeffs: NsCoeffs::MuonFast,
            muon_rms_scale: false,
            aux_kind: AuxKind::Sgd,
            aux_lr: None,
            averaging: AveragingMode::LrWeighted,
            muon_include_first: true,
            muon_include_last: false,
        }
    }
}

impl OptimizerConfig {
    /// The rho actually in effect: fixed-beta SF kinds pin rho to 0.
    pub fn effective_rho(&self) -> f64 {
        if self.kind == OptimizerKind::Amuse {
            self.amuse_rho
        } else {
            0.0
        }
    }

    pub fn aux_lr(&self) -> f64 {
        self.aux_lr.unwrap_or(self.lr)
    }

    pub fn validate(&self) -> Result<()> {
        fn range(name: &str, value: f64, lo: f64, hi: f64, hi_open: bool) -> Result<()> {
            let ok = value >= lo && if hi_open { value < hi } else { value <= hi };
            if !ok {
                let bracket = if hi_open { ")" } else { "]" };
                return Err(AmuseError::Config(format!(
                    "{name} = {value} outside [{lo}, {hi}{bracket}"
                )));
            }
            Ok(())
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(AmuseError::Config(format!(
                "lr = {} must be a positive finite number",
                self.lr
            )));
        }
        if let Some(aux) = self.aux_lr {
            if !(aux > 0.0 && aux.is_finite()) {
                return Err(AmuseError::Config(format!(
                    "aux_lr = {aux} must be a positive finite number"
                )));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(AmuseError::Config(format!(
                "weight_decay = {} must be non-negative",
                self.weight_decay
            )));
        }
        range("muon_momentum", self.muon_momentum, 0.0, 1.0, true)?;
        range("sgd_momentum", self.sgd_momentum, 0.0, 1.0, true)?;
        range("adamw_beta1", self.adamw_beta1, 0.0, 1.0, true)?;
        range("adamw_beta2", self.adamw_beta2, 0.0, 1.0, true)?;
        range("amuse_beta1", self.amuse_beta1, 0.0, 1.0, true)?;
        range("amuse_rho", self.amuse_rho, 0.0, 1.0, false)?;
        if self.warmup_steps < 1 {
            return Err(AmuseError::Config("warmup_steps must be at least 1".into()));
        }
        if self.kind == OptimizerKind::Amuse && self.amuse_rho > 0.0 && self.warmup_steps < 2 {
            return Err(AmuseError::Config(
                "amuse with rho > 0 requires warmup_steps >= 2 (the schedule pivot is degenerate at T0 = 1)"
                    .into(),
            ));
        }
        if self.ns_iters == 0 {
            return Err(AmuseError::Config("ns_iters must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(AmuseError::Config(format!(
                    "grad_clip = {c} must be a positive finite number"
                )));
            }
        }
        Ok(())
    }
}
