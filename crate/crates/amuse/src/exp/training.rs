//! The instrumented training loop: scripted runs, probes, metric rows,
//! checkpoints, and subspace-scaled variants.

use crate::checkpoint::save_optimizer;
use crate::data::{batches, Dataset};
use crate::error::{AmuseError, Result};
use crate::linalg::{cosine_similarity, norm};
use crate::net::{Activation, Batch, MlpModel};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::substream;
use crate::spectral::{
    basis_at_current, dominant_ratio, grad_probe_alpha, scale_update, EigenBasis, ProbeAnchor,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::metrics::{
    alpha_rows_to_csv, rows_to_csv, subspace_rows_to_csv, AlphaRow, MetricRow, SubspaceRow,
};

/// Which probes a run executes at the measurement cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSet {
    /// Hessian basis, dominant ratios of update and gradient, and (for
    /// Muon kinds) the momentum vs orthogonalized-update comparison.
    pub subspace: bool,
    /// Gradients at interpolation points between z and x (SF kinds).
    pub grad_alpha: bool,
    /// Update norms.
    pub norms: bool,
    /// Cosine similarity between consecutive updates.
    pub cosine: bool,
}

impl ProbeSet {
    pub fn all() -> Self {
        Self {
            subspace: true,
            grad_alpha: true,
            norms: true,
            cosine: true,
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn any(&self) -> bool {
        self.subspace || self.grad_alpha || self.norms || self.cosine
    }
}

/// Subspace-wise update scaling, active from `start_step` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub alpha: f64,
    pub gamma: f64,
    pub start_step: u64,
}

/// A fully specified training run. Pure function of this value plus the
/// dataset: identical specs produce byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    /// Experiment name; first component of emitted file names.
    pub name: String,
    /// Layer widths including input and output.
    pub model_dims: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub probes: ProbeSet,
    pub probe_cadence: u64,
    /// First step eligible for probes (cadence still applies).
    pub probe_start: u64,
    /// Subspace dimension; defaults to the class count.
    pub lanczos_k: Option<usize>,
    pub lanczos_iters: usize,
    /// Interpolation grid of the grad_alpha probe.
    pub alphas: Vec<f64>,
    pub probe_anchor: ProbeAnchor,
    pub scaling: Option<ScalingSpec>,
    pub checkpoint_cadence: Option<u64>,
}

impl RunSpec {
    pub fn new(name: impl Into<String>, optimizer: OptimizerConfig) -> Self {
        Self {
            name: name.into(),
            model_dims: vec![64, 200, 200, 10],
            activation: Activation::Tanh,
            seed: 0,
            optimizer,
            steps: 1000,
            batch_size: 50,
            probes: ProbeSet::none(),
            probe_cadence: 50,
            probe_start: 1,
            lanczos_k: None,
            lanczos_iters: 60,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            probe_anchor: ProbeAnchor::EvalPoint,
            scaling: None,
            checkpoint_cadence: Some(500),
        }
    }
}

/// Output locations for one run, following the
/// `{experiment}-{optimizer}-{seed}` naming scheme.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub metrics_csv: PathBuf,
    pub subspace_csv: PathBuf,
    pub alpha_csv: PathBuf,
    pub checkpoint_dir: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path, spec: &RunSpec) -> Self {
        let stem = format!(
            "{}-{}-{}",
            spec.name,
            spec.optimizer.kind.name(),
            spec.seed
        );
        Self {
            metrics_csv: out_dir.join(format!("{stem}.csv")),
            subspace_csv: out_dir.join(format!("{stem}-subspace.csv")),
            alpha_csv: out_dir.join(format!("{stem}-alpha.csv")),
            checkpoint_dir: out_dir.to_path_buf(),
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricRow>,
    pub subspace_rows: Vec<SubspaceRow>,
    pub alpha_rows: Vec<AlphaRow>,
    pub model: MlpModel,
    pub optimizer: Optimizer,
    /// Step at which a non-finite loss aborted the run, if any.
    pub aborted_at: Option<u64>,
    /// (step, training-point parameters) at the checkpoint cadence.
    pub snapshots: Vec<(u64, Vec<f64>)>,
}

impl TrainOutcome {
    /// Mean of a row field over a closed step window.
    pub fn mean_over(&self, lo: u64, hi: u64, f: impl Fn(&MetricRow) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.step >= lo && r.step <= hi)
            .map(f)
            .filter(|v| !v.is_nan())
            .collect();
        if vals.is_empty() {
            return f64::NAN;
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn max_eval_loss(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.eval_loss)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_eval_loss(&self) -> f64 {
        self.rows.last().map(|r| r.eval_loss).unwrap_or(f64::NAN)
    }
}

/// Trains per the spec, probing at the cadence, optionally persisting
/// metrics and checkpoints under `out_dir`.
pub fn run_training(spec: &RunSpec, ds: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    spec.optimizer.validate()?;
    if spec.batch_size < 1 || spec.steps < 1 || spec.probe_cadence < 1 {
        return Err(AmuseError::Config(
            "steps, batch_size, and probe_cadence must be positive".into(),
        ));
    }
    if let Some(first) = spec.model_dims.first() {
        if *first != ds.feature_dim() {
            return Err(AmuseError::Config(format!(
                "model input dim {} does not match dataset features {}",
                first,
                ds.feature_dim()
            )));
        }
    }
    if spec.model_dims.last() != Some(&ds.num_classes) {
        return Err(AmuseError::Config(format!(
            "model output dim {:?} does not match dataset classes {}",
            spec.model_dims.last(),
            ds.num_classes
        )));
    }

    let paths = out_dir.map(|d| RunPaths::new(d, spec));
    let mut model = MlpModel::new(
        &spec.model_dims,
        spec.activation,
        substream(spec.seed, 0x6d6f64), // "mod"
    )?;
    let mut opt = Optimizer::new(&model, spec.optimizer.clone())?;
    let data_seed = substream(spec.seed, 0x646174); // "dat"
    let lanczos_seed = substream(spec.seed, 0x6c616e); // "lan"

    let k = spec.lanczos_k.unwrap_or(ds.num_classes);
    let full_batch = ds.as_batch();
    let batches_per_epoch = ds.len().div_ceil(spec.batch_size) as u64;

    let mut rows: Vec<MetricRow> = Vec::new();
    let mut subspace_rows: Vec<SubspaceRow> = Vec::new();
    let mut alpha_rows: Vec<AlphaRow> = Vec::new();
    let mut snapshots: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut aborted_at = None;

    let mut epoch_batches: Vec<Batch> = Vec::new();
    let mut current_epoch = u64::MAX;
    let mut prev_eval = opt.eval_params_flat(&model);
    let mut prev_delta: Option<Vec<f64>> = None;
    let mut scaling_basis: Option<EigenBasis> = None;

    for t in 1..=spec.steps {
        let epoch = (t - 1) / batches_per_epoch;
        if epoch != current_epoch {
            epoch_batches = batches(ds, spec.batch_size, data_seed, epoch);
            current_epoch = epoch;
        }
        let batch = &epoch_batches[((t - 1) % batches_per_epoch) as usize];

        // Refresh the scaling basis at the cadence, anchored at the
        // current training point.
        let scaling_active = spec
            .scaling
            .map(|s| t >= s.start_step && (s.alpha != 1.0 || s.gamma != 1.0))
            .unwrap_or(false);
        if scaling_active {
            let s = spec.scaling.unwrap();
            let needs_refresh = scaling_basis.is_none()
                || (t - s.start_step) % spec.probe_cadence == 0 && t != s.start_step
                || t == s.start_step;
            if scaling_basis.is_none() || needs_refresh {
                scaling_basis = Some(basis_at_current(
                    &model,
                    &full_batch,
                    k,
                    spec.lanczos_iters,
                    substream(lanczos_seed, t),
                )?);
            }
        }

        let step_result = if scaling_active {
            let s = spec.scaling.unwrap();
            let basis = scaling_basis.as_ref().unwrap();
            opt.step_transformed(&mut model, batch, &|u: &[f64]| {
                scale_update(u, basis, s.alpha, s.gamma)
            })
        } else {
            opt.step(&mut model, batch)
        };

        let info = match step_result {
            Ok(info) => info,
            Err(AmuseError::NanLoss { step }) => {
                // The state was not advanced; persist the last-good state.
                if let Some(p) = &paths {
                    save_optimizer(&model, &opt, &p.checkpoint_dir.join(last_good_name(spec)))?;
                }
                aborted_at = Some(step);
                break;
            }
            Err(other) => return Err(other),
        };

        let eval_now = opt.eval_params_flat(&model);
        let delta: Vec<f64> = eval_now
            .iter()
            .zip(&prev_eval)
            .map(|(a, b)| a - b)
            .collect();

        let probe_due = spec.probes.any()
            && t >= spec.probe_start
            && t % spec.probe_cadence == 0;

        if probe_due {
            let mut r_dom_update = f64::NAN;
            let mut r_dom_grad = f64::NAN;
            if spec.probes.subspace {
                // Basis anchored at the pre-step evaluation iterate.
                let saved = model.params_flat();
                model.set_params_flat(&prev_eval);
                let basis = basis_at_current(
                    &model,
                    &full_batch,
                    k,
                    spec.lanczos_iters,
                    substream(lanczos_seed, t),
                )?;
                model.set_params_flat(&saved);

                if norm(&delta) > 0.0 {
                    r_dom_update = dominant_ratio(&delta, &basis)?.0;
                }
                if norm(&info.grad_flat) > 0.0 {
                    r_dom_grad = dominant_ratio(&info.grad_flat, &basis)?.0;
                }
                if let (Some(m), Some(o)) = (&info.muon_momentum_flat, &info.muon_orth_flat) {
                    if norm(m) > 0.0 && norm(o) > 0.0 {
                        subspace_rows.push(SubspaceRow {
                            step: t,
                            r_dom_momentum: dominant_ratio(m, &basis)?.0,
                            r_dom_orth: dominant_ratio(o, &basis)?.0,
                        });
                    }
                }
            }
            if spec.probes.grad_alpha && spec.optimizer.kind.is_schedule_free() {
                let results = grad_probe_alpha(
                    &mut model,
                    &opt,
                    &full_batch,
                    &full_batch,
                    &spec.alphas,
                    k,
                    spec.lanczos_iters,
                    substream(substream(spec.seed, 0x616c70), t), // "alp"
                    spec.probe_anchor,
                )?;
                for r in results {
                    alpha_rows.push(AlphaRow {
                        step: t,
                        alpha: r.alpha,
                        r_dom_grad: r.r_dom,
                    });
                }
            }

            let eval_loss = {
                let saved = model.params_flat();
                model.set_params_flat(&eval_now);
                let loss = model.forward_loss(&full_batch)?;
                model.set_params_flat(&saved);
                loss
            };
            let update_norm = if spec.probes.norms {
                norm(&delta)
            } else {
                f64::NAN
            };
            let update_cosine = if spec.probes.cosine {
                prev_delta
                    .as_ref()
                    .map(|p| cosine_similarity(p, &delta))
                    .unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };

            let row = MetricRow {
                step: t,
                train_loss: info.train_loss,
                eval_loss,
                r_dom_update,
                r_dom_grad,
                update_norm,
                update_cosine,
                beta_t: info.beta_t,
                omega_t: info.omega_t,
                eta_t: info.eta_t,
            };
            row.validate(rows.last().map(|r| r.step))?;
            rows.push(row);
        }

        if let Some(cadence) = spec.checkpoint_cadence {
            if cadence > 0 && t % cadence == 0 {
                snapshots.push((t, model.params_flat()));
                if let Some(p) = &paths {
                    let file = p
                        .checkpoint_dir
                        .join(format!("{}-checkpoint-{t}.amsk", run_stem(spec)));
                    save_optimizer(&model, &opt, &file)?;
                }
            }
        }

        prev_delta = Some(delta);
        prev_eval = eval_now;
    }

    if let Some(p) = &paths {
        std::fs::write(&p.metrics_csv, rows_to_csv(&rows))
            .map_err(|e| AmuseError::io(format!("write {}", p.metrics_csv.display()), e))?;
        if !subspace_rows.is_empty() {
            std::fs::write(&p.subspace_csv, subspace_rows_to_csv(&subspace_rows))
                .map_err(|e| AmuseError::io(format!("write {}", p.subspace_csv.display()), e))?;
        }
        if !alpha_rows.is_empty() {
            std::fs::write(&p.alpha_csv, alpha_rows_to_csv(&alpha_rows))
                .map_err(|e| AmuseError::io(format!("write {}", p.alpha_csv.display()), e))?;
        }
        let final_file = p
            .checkpoint_dir
            .join(format!("{}-checkpoint-final.amsk", run_stem(spec)));
        save_optimizer(&model, &opt, &final_file)?;
    }

    Ok(TrainOutcome {
        rows,
        subspace_rows,
        alpha_rows,
        model,
        optimizer: opt,
        aborted_at,
        snapshots,
    })
}

fn run_stem(spec: &RunSpec) -> String {
    format!(
        "{}-{}-{}",
        spec.name,
        spec.optimizer.kind.name(),
        spec.seed
    )
}

fn last_good_name(spec: &RunSpec) -> String {
    format!("{}-checkpoint-last-good.amsk", run_stem(spec))
}

/// Subspace-scaling experiment: vanilla updates before `start_step`, then
/// every update direction is replaced by its dominant/bulk rescaling.
pub fn run_subspace_scaling(
    spec: &RunSpec,
    ds: &Dataset,
    alpha: f64,
    gamma: f64,
    start_step: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut spec = spec.clone();
    spec.scaling = Some(ScalingSpec {
        alpha,
        gamma,
        start_step: start_step.max(1),
    });
    run_training(&spec, ds, out_dir)
}

/// Runs independent specs in parallel (each run is a pure function of its
/// spec, so thread scheduling cannot affect any output).
pub fn run_many(specs: &[RunSpec], ds: &Dataset, out_dir: Option<&Path>) -> Result<Vec<TrainOutcome>> {
    use rayon::prelude::*;
    specs
        .par_iter()
        .map(|s| run_training(s, ds, out_dir))
        .collect()
}

/// Caps the process-wide worker pool (the thread-count environment knob).
/// A no-op once any parallel work has already run.
pub fn configure_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}
