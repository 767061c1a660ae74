//! The optimizer family: SGD, AdamW, Muon, the schedule-free wrapper,
//! SF-Muon, and AMUSE.
//!
//! One `Optimizer` covers all kinds. Parameters are handled as "slots" in
//! model flattening order (weights as matrices, biases as 1 x n matrices);
//! each slot carries an update rule:
//!
//! - `Muon`: momentum accumulate, Newton-Schulz orthogonalize, descend.
//! - `HeavyBall`: classical momentum SGD (coefficient 0 gives plain SGD).
//! - `AdamW`: RMS-normalized step with decoupled decay; the first moment
//!   is enabled only for the standalone AdamW baseline, matching the
//!   momentum-free form used inside the schedule-free wrapper.
//!
//! Schedule-free kinds run three sequences: the model holds the gradient
//! point y, the state holds the base iterate z and the averaged iterate x.
//! x is maintained explicitly here (the unconditionally correct reference);
//! the two-buffer eval-swap reconstruction is provided separately and
//! validated against it.

use crate::error::{AmuseError, Result};
use crate::linalg::{newton_schulz, vectorize, DenseMatrix};
use crate::net::{Batch, GradSet, MlpModel};

use super::config::{AuxKind, AveragingMode, OptimizerConfig, OptimizerKind};
use super::schedule::{averaging_coeff, aux_lr_at, beta_at, lr_at, omega_t};

/// Parameter-group membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Muon,
    Aux,
}

/// Per-slot update rule, fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Muon,
    HeavyBall { momentum: f64 },
    AdamW { first_moment: bool },
}

/// Per-slot optimizer buffers.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotState {
    Muon {
        m: DenseMatrix,
    },
    HeavyBall {
        m: DenseMatrix,
    },
    AdamW {
        m: Option<DenseMatrix>,
        v: DenseMatrix,
    },
}

/// Mutable optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    /// Completed steps.
    pub t: u64,
    /// Running sum of squared learning rates through step t.
    pub sum_eta_sq: f64,
    /// The most recent averaging coefficient (c_{t+1}); c_1 = 1 by convention.
    pub c_current: f64,
    /// c at the warmup pivot, cached once reached.
    pub c_t0: Option<f64>,
    /// beta used to form the y currently held by the model.
    pub beta_y: f64,
    /// Per-slot buffers.
    pub slots: Vec<SlotState>,
    /// Base iterates (schedule-free kinds only).
    pub z: Vec<DenseMatrix>,
    /// Averaged iterates, maintained explicitly (schedule-free kinds only).
    pub x: Vec<DenseMatrix>,
}

/// Everything a metrics consumer may want from one step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub t: u64,
    pub eta_t: f64,
    /// beta at the gradient-evaluation point of this step (0 for plain kinds).
    pub beta_t: f64,
    /// Averaging coefficient c_{t+1} used by this step's x update (1 for plain kinds).
    pub c_next: f64,
    /// Effective averaging weight omega_t (1 for plain kinds).
    pub omega_t: f64,
    /// Batch loss at the gradient-evaluation point.
    pub train_loss: f64,
    /// The (possibly clipped) gradient actually used, flattened.
    pub grad_flat: Vec<f64>,
    /// Muon momentum M_t embedded in full parameter space (zeros elsewhere).
    pub muon_momentum_flat: Option<Vec<f64>>,
    /// Orthogonalized update O(M_t) embedded likewise.
    pub muon_orth_flat: Option<Vec<f64>>,
}

/// Copies model parameters into slot form (biases as 1 x n).
pub fn model_to_slots(model: &MlpModel) -> Vec<DenseMatrix> {
    let mut slots = Vec::with_capacity(model.layers.len() * 2);
    for l in &model.layers {
        slots.push(l.weight.clone());
        slots.push(
            DenseMatrix::new(1, l.bias.len(), l.bias.clone()).expect("bias slot"),
        );
    }
    slots
}

/// Writes slot values back into the model.
pub fn slots_to_model(slots: &[DenseMatrix], model: &mut MlpModel) {
    assert_eq!(slots.len(), model.layers.len() * 2);
    for (i, l) in model.layers.iter_mut().enumerate() {
        l.weight = slots[2 * i].clone();
        l.bias = slots[2 * i + 1].data().to_vec();
    }
}

/// Converts a gradient set into slot form.
pub fn grads_to_slots(g: GradSet) -> Vec<DenseMatrix> {
    let mut slots = Vec::with_capacity(g.layers.len() * 2);
    for l in g.layers {
        let bias = DenseMatrix::new(1, l.bias.len(), l.bias).expect("bias grad slot");
        slots.push(l.weight);
        slots.push(bias);
    }
    slots
}

/// Scales all gradients by `clip/norm` when the global norm exceeds `clip`.
pub fn clip_gradients(grads: &mut [DenseMatrix], clip: f64) {
    let norm_sq: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > clip {
        let s = clip / norm;
        for g in grads {
            g.scale_in_place(s);
        }
    }
}

#[derive(Debug)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    pub state: OptState,
    rules: Vec<UpdateRule>,
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl Optimizer {
    pub fn new(model: &MlpModel, cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.averaging == AveragingMode::Frozen && cfg.effective_rho() > 0.0 {
            return Err(AmuseError::Config(
                "frozen averaging is incompatible with a growing beta schedule".into(),
            ));
        }
        let rules = assign_rules(model, &cfg);
        let slots = rules
            .iter()
            .zip(model_to_slots(model))
            .map(|(rule, slot)| {
                let (r, c) = slot.shape();
                match rule {
                    UpdateRule::Muon => SlotState::Muon {
                        m: DenseMatrix::zeros(r, c),
                    },
                    UpdateRule::HeavyBall { .. } => SlotState::HeavyBall {
                        m: DenseMatrix::zeros(r, c),
                    },
                    UpdateRule::AdamW { first_moment } => SlotState::AdamW {
                        m: first_moment.then(|| DenseMatrix::zeros(r, c)),
                        v: DenseMatrix::zeros(r, c),
                    },
                }
            })
            .collect();

        let (z, x) = if cfg.kind.is_schedule_free() {
            let current = model_to_slots(model);
            (current.clone(), current)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut names = Vec::new();
        let mut shapes = Vec::new();
        for (i, l) in model.layers.iter().enumerate() {
            names.push(format!("layer{i}.weight"));
            shapes.push(l.weight.shape());
            names.push(format!("layer{i}.bias"));
            shapes.push((1, l.bias.len()));
        }

        let c_t0 = (cfg.warmup_steps == 1).then_some(1.0);
        let beta_y = if cfg.kind.is_schedule_free() {
            cfg.amuse_beta1
        } else {
            0.0
        };

        Ok(Self {
            state: OptState {
                t: 0,
                sum_eta_sq: 0.0,
                c_current: 1.0,
                c_t0,
                beta_y,
                slots,
                z,
                x,
            },
            rules,
            names,
            shapes,
            cfg,
        })
    }

    pub fn rules(&self) -> &[UpdateRule] {
        &self.rules
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn dim(&self) -> usize {
        self.shapes.iter().map(|(r, c)| r * c).sum()
    }

    /// The parameters evaluation should use: the explicit x sequence for
    /// schedule-free kinds, the raw model parameters otherwise.
    pub fn eval_params_flat(&self, model: &MlpModel) -> Vec<f64> {
        if self.cfg.kind.is_schedule_free() {
            vectorize(&self.state.x)
        } else {
            model.params_flat()
        }
    }

    /// One full training step. For plain kinds the model holds the iterate;
    /// for schedule-free kinds the model holds y_t on entry and y_{t+1} on
    /// exit.
    pub fn step(&mut self, model: &mut MlpModel, batch: &Batch) -> Result<StepInfo> {
        let (loss, grads) = model.loss_and_grad(batch)?;
        if !loss.is_finite() {
            return Err(AmuseError::NanLoss {
                step: self.state.t + 1,
            });
        }
        self.step_from_grads(model, loss, grads, None)
    }

    /// As [`step`](Self::step), but the full flattened update direction is
    /// passed through `transform` before being applied (the subspace
    /// scaling hook). The transform sees the concatenated per-slot update
    /// directions, pre learning rate.
    pub fn step_transformed(
        &mut self,
        model: &mut MlpModel,
        batch: &Batch,
        transform: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<StepInfo> {
        let (loss, grads) = model.loss_and_grad(batch)?;
        if !loss.is_finite() {
            return Err(AmuseError::NanLoss {
                step: self.state.t + 1,
            });
        }
        self.step_from_grads(model, loss, grads, Some(transform))
    }

    fn step_from_grads(
        &mut self,
        model: &mut MlpModel,
        loss: f64,
        grads: GradSet,
        transform: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    ) -> Result<StepInfo> {
        grads.check_finite()?;
        let mut grad_slots = grads_to_slots(grads);
        if let Some(clip) = self.cfg.grad_clip {
            clip_gradients(&mut grad_slots, clip);
        }

        let t = self.state.t + 1;
        let eta_t = lr_at(&self.cfg, t);
        let aux_eta_t = aux_lr_at(&self.cfg, t);
        self.state.sum_eta_sq += eta_t * eta_t;

        let grad_flat = vectorize(&grad_slots);
        let (directions, momentum_flat, orth_flat) = self.compute_directions(&grad_slots, t)?;
        let directions = match transform {
            Some(f) => {
                let flat = vectorize(&directions);
                let transformed = f(&flat);
                assert_eq!(transformed.len(), flat.len(), "transform must preserve length");
                crate::linalg::de_vectorize(&transformed, &self.shapes)?
            }
            None => directions,
        };

        let beta_t;
        let c_next;
        if self.cfg.kind.is_schedule_free() {
            beta_t = self.state.beta_y;
            c_next = averaging_coeff(self.cfg.averaging, t, eta_t, self.state.sum_eta_sq);

            // z update (decay acts on z only), then the running average.
            let mut z = std::mem::take(&mut self.state.z);
            self.apply_directions(&mut z, &directions, eta_t, aux_eta_t);
            if self.cfg.averaging != AveragingMode::Frozen {
                for (x, zn) in self.state.x.iter_mut().zip(&z) {
                    for (xe, ze) in x.data_mut().iter_mut().zip(zn.data()) {
                        *xe = (1.0 - c_next) * *xe + c_next * ze;
                    }
                }
            }
            self.state.z = z;

            self.state.t = t;
            self.state.c_current = c_next;
            if t + 1 == self.cfg.warmup_steps {
                self.state.c_t0 = Some(c_next);
            }

            // Write y_{t+1} = z + beta_{t+1} (x - z) into the model.
            let beta_next = beta_at(&self.cfg, t + 1, c_next, self.state.c_t0);
            let y_next = interpolate_slots(&self.state.z, &self.state.x, beta_next);
            slots_to_model(&y_next, model);
            self.state.beta_y = beta_next;
        } else {
            beta_t = 0.0;
            c_next = 1.0;
            let mut params = model_to_slots(model);
            self.apply_directions(&mut params, &directions, eta_t, aux_eta_t);
            slots_to_model(&params, model);
            self.state.t = t;
            self.state.c_current = c_next;
            if t + 1 == self.cfg.warmup_steps {
                self.state.c_t0 = Some(c_next);
            }
        }

        let omega = if self.cfg.kind.is_schedule_free() {
            // c_t of this step is the coefficient that was current when y_t
            // was formed; for t = 1 that is the c_1 = 1 convention.
            omega_t(
                if t == 1 { 1.0 } else { self.prev_c(t) },
                beta_t,
            )
        } else {
            1.0
        };

        Ok(StepInfo {
            t,
            eta_t,
            beta_t,
            c_next,
            omega_t: omega,
            train_loss: loss,
            grad_flat,
            muon_momentum_flat: momentum_flat,
            muon_orth_flat: orth_flat,
        })
    }

    /// c_t as seen by step t (the coefficient computed at step t-1).
    fn prev_c(&self, t: u64) -> f64 {
        debug_assert_eq!(self.state.t, t);
        // After the step bookkeeping c_current = c_{t+1}; reconstruct c_t for
        // reporting only. The lr-weighted form needs the previous sums, so
        // recompute directly.
        match self.cfg.averaging {
            AveragingMode::Simple => 1.0 / t as f64,
            AveragingMode::Frozen => 0.0,
            AveragingMode::LrWeighted => {
                if t == 1 {
                    1.0
                } else {
                    let eta_prev = lr_at(&self.cfg, t - 1);
                    let prev_sum = self.state.sum_eta_sq - {
                        let e = lr_at(&self.cfg, t);
                        e * e
                    };
                    eta_prev * eta_prev / prev_sum
                }
            }
        }
    }

    /// Computes per-slot update directions, advancing momentum/moment state.
    /// Returns the directions plus the Muon momentum and orthogonalized
    /// update embedded in full space (when any slot uses Muon).
    fn compute_directions(
        &mut self,
        grads: &[DenseMatrix],
        t: u64,
    ) -> Result<(Vec<DenseMatrix>, Option<Vec<f64>>, Option<Vec<f64>>)> {
        let mut directions = Vec::with_capacity(grads.len());
        let any_muon = self.rules.iter().any(|r| matches!(r, UpdateRule::Muon));
        let dim = self.dim();
        let mut momentum_flat = any_muon.then(|| vec![0.0; dim]);
        let mut orth_flat = any_muon.then(|| vec![0.0; dim]);
        let mut offset = 0usize;

        for (i, g) in grads.iter().enumerate() {
            let n = g.len();
            let dir = match (&self.rules[i], &mut self.state.slots[i]) {
                (UpdateRule::Muon, SlotState::Muon { m }) => {
                    // M_t = mu M_{t-1} + G_t
                    m.scale_in_place(self.cfg.muon_momentum);
                    m.axpy_in_place(1.0, g);
                    let orth_input = if self.cfg.nesterov {
                        let mut v = m.scale(self.cfg.muon_momentum);
                        v.axpy_in_place(1.0, g);
                        v
                    } else {
                        m.clone()
                    };
                    let mut o = newton_schulz(&orth_input, self.cfg.ns_iters, self.cfg.ns_coeffs)
                        .map_err(|e| match e {
                            AmuseError::ZeroMatrix => AmuseError::InvalidArgument(format!(
                                "zero matrix has no polar factor (momentum of {})",
                                self.names[i]
                            )),
                            other => other,
                        })?;
                    if self.cfg.muon_rms_scale {
                        let (r, c) = o.shape();
                        o.scale_in_place((r.max(c) as f64).sqrt());
                    }
                    if let Some(buf) = momentum_flat.as_mut() {
                        buf[offset..offset + n].copy_from_slice(m.data());
                    }
                    if let Some(buf) = orth_flat.as_mut() {
                        buf[offset..offset + n].copy_from_slice(o.data());
                    }
                    o
                }
                (UpdateRule::HeavyBall { momentum }, SlotState::HeavyBall { m }) => {
                    m.scale_in_place(*momentum);
                    m.axpy_in_place(1.0, g);
                    m.clone()
                }
                (UpdateRule::AdamW { first_moment }, SlotState::AdamW { m, v }) => {
                    let b1 = self.cfg.adamw_beta1;
                    let b2 = self.cfg.adamw_beta2;
                    let eps = self.cfg.adamw_eps;
                    for (ve, ge) in v.data_mut().iter_mut().zip(g.data()) {
                        *ve = b2 * *ve + (1.0 - b2) * ge * ge;
                    }
                    let v_corr = 1.0 - b2.powi(t as i32);
                    let numerator: DenseMatrix = if *first_moment {
                        let m = m.as_mut().expect("first moment buffer");
                        for (me, ge) in m.data_mut().iter_mut().zip(g.data()) {
                            *me = b1 * *me + (1.0 - b1) * ge;
                        }
                        let m_corr = 1.0 - b1.powi(t as i32);
                        m.scale(1.0 / m_corr)
                    } else {
                        g.clone()
                    };
                    let mut dir = numerator;
                    for (de, ve) in dir.data_mut().iter_mut().zip(v.data()) {
                        let vhat = ve / v_corr;
                        *de /= vhat.sqrt() + eps;
                    }
                    dir
                }
                _ => unreachable!("rule/state mismatch"),
            };
            directions.push(dir);
            offset += n;
        }
        Ok((directions, momentum_flat, orth_flat))
    }

    /// `p <- (1 - eta lambda) p - eta u` per slot, with the group's rate.
    fn apply_directions(
        &self,
        params: &mut [DenseMatrix],
        directions: &[DenseMatrix],
        eta_t: f64,
        aux_eta_t: f64,
    ) {
        let lambda = self.cfg.weight_decay;
        for ((p, u), rule) in params.iter_mut().zip(directions).zip(&self.rules) {
            let eta = match rule {
                UpdateRule::Muon => eta_t,
                _ => {
                    if self.cfg.kind.uses_muon() {
                        aux_eta_t
                    } else {
                        eta_t
                    }
                }
            };
            p.scale_in_place(1.0 - eta * lambda);
            p.axpy_in_place(-eta, u);
        }
    }

    /// Swaps the model to the averaged iterate x_t; restoring is the
    /// guard's drop. For beta > 0 the swap derives x from (y, z) in place,
    /// exactly as the two-buffer storage scheme does; for beta = 0 the
    /// stored x is used (y carries no information about x there). Plain
    /// kinds get an identity guard.
    pub fn eval_swap<'a>(&'a self, model: &'a mut MlpModel) -> EvalSwapGuard<'a> {
        let saved = model.params_flat();
        if self.cfg.kind.is_schedule_free() {
            let beta = self.state.beta_y;
            let x_hat: Vec<DenseMatrix> = if beta > 0.0 {
                let y = model_to_slots(model);
                y.iter()
                    .zip(&self.state.z)
                    .map(|(y_s, z_s)| {
                        let mut x = y_s.clone();
                        for (xe, ze) in x.data_mut().iter_mut().zip(z_s.data()) {
                            *xe = (*xe - (1.0 - beta) * ze) / beta;
                        }
                        x
                    })
                    .collect()
            } else {
                self.state.x.clone()
            };
            slots_to_model(&x_hat, model);
        }
        EvalSwapGuard { model, saved }
    }
}

/// Restores the parameters it replaced, bitwise, on drop.
pub struct EvalSwapGuard<'a> {
    model: &'a mut MlpModel,
    saved: Vec<f64>,
}

impl EvalSwapGuard<'_> {
    pub fn model(&self) -> &MlpModel {
        self.model
    }
}

impl Drop for EvalSwapGuard<'_> {
    fn drop(&mut self) {
        self.model.set_params_flat(&self.saved);
    }
}

/// `z + beta (x - z)` per slot; exact at the endpoints.
pub fn interpolate_slots(z: &[DenseMatrix], x: &[DenseMatrix], beta: f64) -> Vec<DenseMatrix> {
    if beta == 0.0 {
        return z.to_vec();
    }
    if beta == 1.0 {
        return x.to_vec();
    }
    z.iter()
        .zip(x)
        .map(|(z_s, x_s)| {
            let mut out = z_s.clone();
            for (oe, (ze, xe)) in out
                .data_mut()
                .iter_mut()
                .zip(z_s.data().iter().zip(x_s.data()))
            {
                *oe = ze + beta * (xe - ze);
            }
            out
        })
        .collect()
}

/// Assigns one update rule per slot from the kind and the group policy.
fn assign_rules(model: &MlpModel, cfg: &OptimizerConfig) -> Vec<UpdateRule> {
    let num_layers = model.layers.len();
    let aux_rule = |cfg: &OptimizerConfig| match cfg.kind {
        OptimizerKind::Sgd => UpdateRule::HeavyBall {
            momentum: cfg.sgd_momentum,
        },
        OptimizerKind::Adamw => UpdateRule::AdamW { first_moment: true },
        OptimizerKind::SfSgd => UpdateRule::HeavyBall { momentum: 0.0 },
        OptimizerKind::SfAdamw => UpdateRule::AdamW {
            first_moment: false,
        },
        OptimizerKind::Muon => match cfg.aux_kind {
            AuxKind::Sgd => UpdateRule::HeavyBall {
                momentum: cfg.sgd_momentum,
            },
            AuxKind::Adamw => UpdateRule::AdamW { first_moment: true },
        },
        OptimizerKind::SfMuon | OptimizerKind::Amuse => match cfg.aux_kind {
            AuxKind::Sgd => UpdateRule::HeavyBall { momentum: 0.0 },
            AuxKind::Adamw => UpdateRule::AdamW {
                first_moment: false,
            },
        },
    };

    let mut rules = Vec::with_capacity(num_layers * 2);
    for (i, l) in model.layers.iter().enumerate() {
        let weight_rule = if cfg.kind.uses_muon() && muon_eligible(i, num_layers, &l.weight, cfg) {
            UpdateRule::Muon
        } else {
            aux_rule(cfg)
        };
        rules.push(weight_rule);
        rules.push(aux_rule(cfg)); // bias
    }
    rules
}

/// Matrix parameters only; first/last layers per the hybrid convention.
fn muon_eligible(
    layer: usize,
    num_layers: usize,
    weight: &DenseMatrix,
    cfg: &OptimizerConfig,
) -> bool {
    if weight.rows() < 2 || weight.cols() < 2 {
        return false;
    }
    if layer == 0 && !cfg.muon_include_first {
        return false;
    }
    if layer == num_layers - 1 && !cfg.muon_include_last {
        return false;
    }
    true
}

/// Group of each slot, for reporting and subspace bookkeeping.
pub fn slot_groups(rules: &[UpdateRule]) -> Vec<ParamGroup> {
    rules
        .iter()
        .map(|r| match r {
            UpdateRule::Muon => ParamGroup::Muon,
            _ => ParamGroup::Aux,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::NsCoeffs;
    use crate::net::{Activation, Layer};
    use crate::rng::AmuseRng;

    fn model_with(dims: &[usize], seed: u64) -> MlpModel {
        MlpModel::new(dims, Activation::Tanh, seed).unwrap()
    }

    fn random_batch(n: usize, d: usize, k: usize, seed: u64) -> Batch {
        let mut rng = AmuseRng::seed_from_u64(seed);
        let inputs = DenseMatrix::from_fn(n, d, |_, _| rng.uniform(0.0, 1.0));
        let labels = (0..n).map(|i| i % k).collect();
        Batch::new(inputs, labels).unwrap()
    }

    fn grad_set(model: &MlpModel, weight_fill: f64, bias_fill: f64) -> GradSet {
        GradSet {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weight: DenseMatrix::from_fn(l.weight.rows(), l.weight.cols(), |_, _| {
                        weight_fill
                    }),
                    bias: vec![bias_fill; l.bias.len()],
                })
                .collect(),
        }
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adamw] {
            let mut model = model_with(&[3, 4, 2], 1);
            let before = model.params_flat();
            let cfg = OptimizerConfig {
                kind,
                lr: 0.1,
                ..Default::default()
            };
            let mut opt = Optimizer::new(&model, cfg).unwrap();
            let grads = grad_set(&model, 0.0, 0.0);
            opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
            assert_eq!(model.params_flat(), before, "{kind:?}");
        }
    }

    #[test]
    fn decay_only_scales_parameters() {
        let mut model = model_with(&[3, 2], 2);
        let before = model.params_flat();
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.5,
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let grads = grad_set(&model, 0.0, 0.0);
        opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
        let factor = 1.0 - 0.5 * 0.1;
        for (a, b) in model.params_flat().iter().zip(&before) {
            assert_eq!(*a, b * factor);
        }
    }

    #[test]
    fn adamw_update_direction_approaches_sign() {
        let mut model = model_with(&[2, 3], 3);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Adamw,
            lr: 1e-3,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let g = -3.7;
        for t in 0..50 {
            let before = model.params_flat();
            let grads = grad_set(&model, g, g);
            opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
            if t >= 20 {
                for (a, b) in model.params_flat().iter().zip(&before) {
                    let u = -(a - b) / 1e-3;
                    assert!((u - g.signum()).abs() < 1e-6, "direction {u}");
                }
            }
        }
    }

    #[test]
    fn muon_without_momentum_orthogonalizes_the_gradient() {
        // One 2x2 Muon-eligible weight; positive diagonal gradient's polar
        // factor is the identity, so the step moves by -eta * I.
        let mut model = model_with(&[2, 2], 4);
        model.layers[0].weight = DenseMatrix::zeros(2, 2);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Muon,
            lr: 0.1,
            muon_momentum: 0.0,
            ns_iters: 25,
            ns_coeffs: NsCoeffs::CubicExact,
            muon_include_first: true,
            muon_include_last: true,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let mut grads = grad_set(&model, 0.0, 0.0);
        grads.layers[0].weight = DenseMatrix::diag(&[4.0, 1.0]);
        opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
        let w = &model.layers[0].weight;
        assert!((w.get(0, 0) + 0.1).abs() < 1e-5, "{}", w.get(0, 0));
        assert!((w.get(1, 1) + 0.1).abs() < 1e-5);
        assert!(w.get(0, 1).abs() < 1e-5 && w.get(1, 0).abs() < 1e-5);
    }

    #[test]
    fn muon_momentum_converges_geometrically_on_constant_gradient() {
        let mut model = model_with(&[2, 2], 5);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Muon,
            lr: 0.01,
            muon_momentum: 0.9,
            muon_include_first: true,
            muon_include_last: true,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let g = DenseMatrix::new(2, 2, vec![1.0, 0.25, -0.5, 2.0]).unwrap();
        let mut prev_delta: Option<Vec<f64>> = None;
        let mut last_gap = f64::INFINITY;
        for t in 0..120 {
            let before = model.params_flat();
            let mut grads = grad_set(&model, 0.0, 0.0);
            grads.layers[0].weight = g.clone();
            let info = opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
            // Momentum approaches G/(1-mu) = 10 G geometrically.
            let m_flat = info.muon_momentum_flat.unwrap();
            let expect = 10.0 * (1.0 - 0.9f64.powi(t + 1));
            assert!((m_flat[0] - expect * 1.0).abs() < 1e-9);
            let delta: Vec<f64> = model
                .params_flat()
                .iter()
                .zip(&before)
                .map(|(a, b)| a - b)
                .collect();
            if let Some(p) = &prev_delta {
                last_gap = delta
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
            }
            prev_delta = Some(delta);
        }
        assert!(last_gap < 1e-6, "update failed to stabilize: {last_gap}");
    }

    #[test]
    fn muon_zero_momentum_and_zero_grad_errors() {
        let mut model = model_with(&[2, 2], 6);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Muon,
            muon_include_first: true,
            muon_include_last: true,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let grads = grad_set(&model, 0.0, 0.0);
        let err = opt
            .step_from_grads(&mut model, 0.0, grads, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("polar factor"), "{err}");
        assert!(err.contains("layer0.weight"), "{err}");
    }

    #[test]
    fn nan_gradient_error_names_parameter() {
        let mut model = model_with(&[2, 2], 6);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        let mut grads = grad_set(&model, 1.0, 1.0);
        grads.layers[0].weight.data_mut()[1] = f64::NAN;
        let err = opt
            .step_from_grads(&mut model, 0.0, grads, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("layer0.weight"), "{err}");
    }

    #[test]
    fn schedule_free_first_step_evaluates_at_z() {
        // x_1 = z_1 means y_1 = z_1 regardless of beta_1.
        let model = model_with(&[3, 4, 2], 7);
        let before = model.params_flat();
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SfAdamw,
            amuse_beta1: 0.73,
            ..Default::default()
        };
        let opt = Optimizer::new(&model, cfg).unwrap();
        // The model already holds y_1; it must equal z_1 bitwise.
        assert_eq!(before, vectorize(&opt.state.z));
        assert_eq!(before, vectorize(&opt.state.x));
    }

    #[test]
    fn scalar_toy_unrolls_by_hand() {
        // 1x1 matrices are never Muon-eligible; SGD base, eta = 1,
        // constant gradient 1 on the weight, beta = 0; the lr-weighted
        // averaging under constant lr gives c_{t+1} = 1/t.
        let mut model = model_with(&[1, 1], 8);
        model.layers[0].weight = DenseMatrix::zeros(1, 1);
        model.layers[0].bias = vec![0.0];
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SfMuon,
            lr: 1.0,
            amuse_beta1: 0.0,
            aux_kind: AuxKind::Sgd,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        for t in 1..=3u64 {
            let mut grads = grad_set(&model, 0.0, 0.0);
            grads.layers[0].weight = DenseMatrix::new(1, 1, vec![1.0]).unwrap();
            opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
            let z = opt.state.z[0].get(0, 0);
            assert_eq!(z, -(t as f64));
        }
        // z_2 = -1, z_3 = -2 (0-indexed z after steps), x_3 = (z_2 + z_3)/2.
        // Our z after step t is z_{t+1}, so x after step 2 is x_3.
        // After step 3, x_4 = (z_2 + z_3 + z_4)/3 = (-1 - 2 - 3)/3 = -2.
        let x = opt.state.x[0].get(0, 0);
        assert!((x + 2.0).abs() < 1e-15, "x_4 = {x}");
    }

    #[test]
    fn sf_muon_with_frozen_averaging_and_zero_beta_matches_muon_bitwise() {
        let base_model = model_with(&[4, 4, 3], 9);
        let batch = random_batch(6, 4, 3, 10);

        let muon_cfg = OptimizerConfig {
            kind: OptimizerKind::Muon,
            lr: 0.02,
            muon_momentum: 0.9,
            ..Default::default()
        };
        let sf_cfg = OptimizerConfig {
            kind: OptimizerKind::SfMuon,
            lr: 0.02,
            muon_momentum: 0.9,
            amuse_beta1: 0.0,
            averaging: AveragingMode::Frozen,
            ..Default::default()
        };

        let mut m1 = base_model.clone();
        let mut m2 = base_model.clone();
        let mut o1 = Optimizer::new(&m1, muon_cfg).unwrap();
        let mut o2 = Optimizer::new(&m2, sf_cfg).unwrap();
        for _ in 0..20 {
            o1.step(&mut m1, &batch).unwrap();
            o2.step(&mut m2, &batch).unwrap();
            assert_eq!(m1.params_flat(), vectorize(&o2.state.z));
            assert_eq!(m1.params_flat(), m2.params_flat());
        }
    }

    #[test]
    fn amuse_with_rho_zero_matches_fixed_beta_sf_muon_bitwise() {
        let base_model = model_with(&[4, 5, 3], 11);
        let batch = random_batch(8, 4, 3, 12);
        let mk = |kind| OptimizerConfig {
            kind,
            lr: 0.01,
            muon_momentum: 0.9,
            amuse_beta1: 0.85,
            amuse_rho: 0.0,
            warmup_steps: 5,
            ..Default::default()
        };
        let mut m1 = base_model.clone();
        let mut m2 = base_model.clone();
        let mut o1 = Optimizer::new(&m1, mk(OptimizerKind::SfMuon)).unwrap();
        let mut o2 = Optimizer::new(&m2, mk(OptimizerKind::Amuse)).unwrap();
        for _ in 0..30 {
            o1.step(&mut m1, &batch).unwrap();
            o2.step(&mut m2, &batch).unwrap();
            assert_eq!(m1.params_flat(), m2.params_flat());
            assert_eq!(vectorize(&o1.state.x), vectorize(&o2.state.x));
        }
    }

    #[test]
    fn eval_swap_round_trips_bitwise_and_matches_explicit_x() {
        let mut model = model_with(&[3, 4, 2], 13);
        let batch = random_batch(5, 3, 2, 14);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Amuse,
            lr: 0.05,
            amuse_beta1: 0.8,
            amuse_rho: 0.5,
            warmup_steps: 4,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        for _ in 0..50 {
            opt.step(&mut model, &batch).unwrap();
            let y_before = model.params_flat();
            let x_explicit = vectorize(&opt.state.x);
            {
                let guard = opt.eval_swap(&mut model);
                let x_swapped = guard.model().params_flat();
                let scale = x_explicit
                    .iter()
                    .map(|x| x.abs())
                    .fold(1e-12f64, f64::max);
                for (a, b) in x_swapped.iter().zip(&x_explicit) {
                    assert!((a - b).abs() / scale < 1e-10, "{a} vs {b}");
                }
            }
            assert_eq!(model.params_flat(), y_before);
        }
    }

    #[test]
    fn eval_swap_with_zero_beta_uses_stored_x() {
        let mut model = model_with(&[3, 2], 15);
        let batch = random_batch(4, 3, 2, 16);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SfSgd,
            lr: 0.5,
            amuse_beta1: 0.0,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        for _ in 0..10 {
            opt.step(&mut model, &batch).unwrap();
        }
        let x_explicit = vectorize(&opt.state.x);
        let guard = opt.eval_swap(&mut model);
        assert_eq!(guard.model().params_flat(), x_explicit);
    }

    #[test]
    fn weight_decay_acts_on_z_only() {
        let mut model = model_with(&[3, 2], 17);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::SfSgd,
            lr: 0.1,
            weight_decay: 0.5,
            amuse_beta1: 0.6,
            ..Default::default()
        };
        let mut opt = Optimizer::new(&model, cfg).unwrap();
        for _ in 0..5 {
            let z_before = vectorize(&opt.state.z);
            let grads = grad_set(&model, 0.0, 0.0);
            opt.step_from_grads(&mut model, 0.0, grads, None).unwrap();
            let z_after = vectorize(&opt.state.z);
            for (a, b) in z_after.iter().zip(&z_before) {
                assert_eq!(*a, b * (1.0 - 0.1 * 0.5));
            }
            // y is exactly the interpolation of the decayed z and the average.
            let y_expect = vectorize(&interpolate_slots(
                &opt.state.z,
                &opt.state.x,
                opt.state.beta_y,
            ));
            assert_eq!(model.params_flat(), y_expect);
        }
    }

    #[test]
    fn muon_eligibility_follows_layer_policy() {
        let model = model_with(&[6, 5, 4, 3], 18);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Muon,
            muon_include_first: false,
            muon_include_last: false,
            ..Default::default()
        };
        let opt = Optimizer::new(&model, cfg).unwrap();
        let groups = slot_groups(opt.rules());
        // Slots: w0 b0 w1 b1 w2 b2; only w1 is Muon under this policy.
        assert_eq!(groups[0], ParamGroup::Aux);
        assert_eq!(groups[2], ParamGroup::Muon);
        assert_eq!(groups[4], ParamGroup::Aux);
        assert!(groups.iter().enumerate().all(|(i, g)| {
            i % 2 == 0 || *g == ParamGroup::Aux
        }));
    }

    #[test]
    fn gradient_clipping_bounds_global_norm() {
        let mut g = vec![
            DenseMatrix::from_fn(2, 2, |_, _| 3.0),
            DenseMatrix::from_fn(1, 2, |_, _| -4.0),
        ];
        clip_gradients(&mut g, 1.0);
        let norm: f64 = g
            .iter()
            .flat_map(|m| m.data().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // A small gradient is untouched.
        let mut g = vec![DenseMatrix::from_fn(1, 2, |_, _| 0.1)];
        let before = g[0].clone();
        clip_gradients(&mut g, 1.0);
        assert_eq!(g[0], before);
    }
}
