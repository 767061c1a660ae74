//! Command-line front door: configuration, orchestration, and persistence
//! for the optimizer toolkit.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 usage/config error,
//! 3 numerical abort (non-finite loss).

mod config;

use amuse::checkpoint::{load_optimizer, save_basis};
use amuse::error::AmuseError;
use amuse::exp::{
    alpha_rows_to_csv, run_quadratic, run_subspace_scaling, run_training, schedule_to_csv,
    schedule_viz, AlphaRow, QuadMode,
};
use amuse::spectral::grad_probe_alpha;
use amuse::verify::{format_table, run_fast_criteria};
use clap::{Args, Parser, Subcommand};
use config::{build_dataset, parse_config, resolve_out_dir, to_run_spec, write_manifest};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "amuse",
    version,
    about = "Orthogonalized-momentum and schedule-free optimizer toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set optimizer.lr=0.01 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for --set seed=N.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for --set steps=N.
    #[arg(long)]
    steps: Option<u64>,
    /// Shorthand for --set optimizer.lr=F.
    #[arg(long)]
    lr: Option<f64>,
    /// Shorthand for --set out_dir=DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(s) = self.steps {
            o.push(format!("steps={s}"));
        }
        if let Some(l) = self.lr {
            o.push(format!("optimizer.lr={l}"));
        }
        if let Some(d) = &self.out {
            o.push(format!("out_dir=\"{}\"", d.display()));
        }
        o
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train with the configured optimizer, probing at the cadence.
    Train(ConfigArgs),
    /// Gradient descent vs matrix-normalized dynamics on the 2x2 quadratic.
    Quadratic {
        #[arg(long, default_value_t = 4.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
        #[arg(long, default_value_t = 0.3)]
        a0: f64,
        #[arg(long, default_value_t = 4.3)]
        b0: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// gd | matrix_normalized
        #[arg(long, default_value = "matrix_normalized")]
        mode: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Muon with dominant/bulk rescaling of updates from a start step.
    Scaling {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 500)]
        start_step: u64,
    },
    /// Gradient probe at interpolation points on a saved optimizer state.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Optimizer checkpoint to probe.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Exponential weight averaging over a run's checkpoint stream.
    Ewa {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0.9)]
        coeff: f64,
    },
    /// Continue a checkpoint with the learning rate decaying linearly to 0.
    Decay {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        eta_start: f64,
        #[arg(long, default_value_t = 500)]
        decay_steps: u64,
    },
    /// Emit beta_t, omega_t, and alpha_t series for schedule settings.
    ScheduleViz {
        #[arg(long, default_value_t = 0.8)]
        beta1: f64,
        #[arg(long, default_value_t = 2000)]
        t0: u64,
        /// Comma-separated rho values.
        #[arg(long, default_value = "0,0.3,0.7,1")]
        rho: String,
        #[arg(long, default_value_t = 8000)]
        t_max: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the oracle/invariant suite and print a pass/fail table.
    Verify,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("AMUSE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            amuse::exp::configure_threads(n);
        }
    }
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                AmuseError::Config(_) => 2u8,
                AmuseError::NanLoss { .. } => 3u8,
                _ => 1u8,
            })
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, AmuseError> {
    match cmd {
        Cmd::Train(args) => {
            let loaded = parse_config(args.config.as_deref(), &args.all_overrides())?;
            let ds = build_dataset(&loaded.config)?;
            let spec = to_run_spec(&loaded.config, &ds);
            let dir = resolve_out_dir(&loaded.config);
            write_manifest(&dir, "train", &loaded)?;
            let outcome = run_training(&spec, &ds, Some(&dir))?;
            if let Some(step) = outcome.aborted_at {
                return Err(AmuseError::NanLoss { step });
            }
            println!(
                "trained {} steps; final eval loss {:.6}",
                spec.steps,
                outcome.final_eval_loss()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Quadratic {
            lambda,
            eta,
            a0,
            b0,
            steps,
            mode,
            out,
        } => {
            let mode = match mode.as_str() {
                "gd" => QuadMode::Gd,
                "matrix_normalized" => QuadMode::MatrixNormalized,
                other => {
                    return Err(AmuseError::Config(format!(
                        "unknown mode '{other}' (expected gd | matrix_normalized)"
                    )))
                }
            };
            let traj = run_quadratic(lambda, eta, a0, b0, steps, mode)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| AmuseError::io(format!("create {}", out.display()), e))?;
            let mut csv = String::from("t,a,b\n");
            for (t, (a, b)) in traj.a.iter().zip(&traj.b).enumerate() {
                csv.push_str(&format!("{t},{a},{b}\n"));
            }
            let name = format!("quadratic-{mode:?}-{lambda}-{eta}.csv").to_lowercase();
            let path = out.join(name);
            std::fs::write(&path, csv)
                .map_err(|e| AmuseError::io(format!("write {}", path.display()), e))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Scaling {
            cfg,
            alpha,
            gamma,
            start_step,
        } => {
            let loaded = parse_config(cfg.config.as_deref(), &cfg.all_overrides())?;
            let ds = build_dataset(&loaded.config)?;
            let spec = to_run_spec(&loaded.config, &ds);
            let dir = resolve_out_dir(&loaded.config);
            write_manifest(&dir, "scaling", &loaded)?;
            let outcome = run_subspace_scaling(&spec, &ds, alpha, gamma, start_step, Some(&dir))?;
            if let Some(step) = outcome.aborted_at {
                return Err(AmuseError::NanLoss { step });
            }
            println!(
                "scaled run (alpha={alpha}, gamma={gamma}) done; final eval loss {:.6}",
                outcome.final_eval_loss()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Probe { cfg, checkpoint } => {
            let loaded = parse_config(cfg.config.as_deref(), &cfg.all_overrides())?;
            let ds = build_dataset(&loaded.config)?;
            let (mut model, opt) = load_optimizer(
                &checkpoint,
                loaded.config.optimizer.clone(),
                loaded.config.model.activation,
            )?;
            let dir = resolve_out_dir(&loaded.config);
            write_manifest(&dir, "probe", &loaded)?;
            let full = ds.as_batch();
            let k = loaded.config.probes.k.unwrap_or(ds.num_classes);
            let results = grad_probe_alpha(
                &mut model,
                &opt,
                &full,
                &full,
                &loaded.config.probes.alphas,
                k,
                loaded.config.probes.lanczos_iters,
                loaded.config.seed,
                loaded.config.probes.anchor,
            )?;
            let rows: Vec<AlphaRow> = results
                .iter()
                .map(|r| AlphaRow {
                    step: opt.state.t,
                    alpha: r.alpha,
                    r_dom_grad: r.r_dom,
                })
                .collect();
            let path = dir.join(format!("probe-{}-alpha.csv", opt.state.t));
            std::fs::write(&path, alpha_rows_to_csv(&rows))
                .map_err(|e| AmuseError::io(format!("write {}", path.display()), e))?;
            // Also export the basis at the current training point.
            let basis = amuse::spectral::basis_at_current(
                &model,
                &full,
                k,
                loaded.config.probes.lanczos_iters,
                loaded.config.seed,
            )?;
            save_basis(
                &basis,
                &dir.join(format!("probe-{}-basis.csv", opt.state.t)),
                &dir.join(format!("probe-{}-basis.amsk", opt.state.t)),
            )?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Ewa { cfg, coeff } => {
            let loaded = parse_config(cfg.config.as_deref(), &cfg.all_overrides())?;
            let ds = build_dataset(&loaded.config)?;
            let dir = resolve_out_dir(&loaded.config);
            let stem = format!(
                "{}-{}-{}",
                loaded.config.experiment,
                loaded.config.optimizer.kind.name(),
                loaded.config.seed
            );
            // Collect the run's checkpoints in step order.
            let mut found: Vec<(u64, PathBuf)> = Vec::new();
            let entries = std::fs::read_dir(&dir)
                .map_err(|e| AmuseError::io(format!("read {}", dir.display()), e))?;
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if let Some(rest) = name
                    .strip_prefix(&format!("{stem}-checkpoint-"))
                    .and_then(|r| r.strip_suffix(".amsk"))
                {
                    if let Ok(step) = rest.parse::<u64>() {
                        found.push((step, entry.path()));
                    }
                }
            }
            found.sort();
            if found.is_empty() {
                return Err(AmuseError::Config(format!(
                    "no checkpoints matching {stem}-checkpoint-*.amsk under {}",
                    dir.display()
                )));
            }
            let mut snapshots = Vec::with_capacity(found.len());
            let mut template = None;
            for (_, path) in &found {
                let (model, _) = load_optimizer(
                    path,
                    loaded.config.optimizer.clone(),
                    loaded.config.model.activation,
                )?;
                snapshots.push(model.params_flat());
                template.get_or_insert(model);
            }
            let losses = amuse::exp::ewa_trace(template.as_ref().unwrap(), &ds, &snapshots, coeff)?;
            let mut csv = String::from("step,ewa_eval_loss\n");
            for ((step, _), loss) in found.iter().zip(&losses) {
                csv.push_str(&format!("{step},{loss}\n"));
            }
            let path = dir.join(format!("{stem}-ewa-{coeff}.csv"));
            std::fs::write(&path, csv)
                .map_err(|e| AmuseError::io(format!("write {}", path.display()), e))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Decay {
            cfg,
            checkpoint,
            eta_start,
            decay_steps,
        } => {
            let loaded = parse_config(cfg.config.as_deref(), &cfg.all_overrides())?;
            let ds = build_dataset(&loaded.config)?;
            let (mut model, mut opt) = load_optimizer(
                &checkpoint,
                loaded.config.optimizer.clone(),
                loaded.config.model.activation,
            )?;
            let dir = resolve_out_dir(&loaded.config);
            write_manifest(&dir, "decay", &loaded)?;
            let losses = amuse::exp::decay_probe(
                &mut model,
                &mut opt,
                &ds,
                eta_start,
                decay_steps,
                loaded.config.seed,
                loaded.config.batch_size,
            )?;
            let mut csv = String::from("step,eval_loss\n");
            for (t, loss) in losses.iter().enumerate() {
                csv.push_str(&format!("{t},{loss}\n"));
            }
            let path = dir.join(format!("decay-{eta_start}-{decay_steps}.csv"));
            std::fs::write(&path, csv)
                .map_err(|e| AmuseError::io(format!("write {}", path.display()), e))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ScheduleViz {
            beta1,
            t0,
            rho,
            t_max,
            out,
        } => {
            std::fs::create_dir_all(&out)
                .map_err(|e| AmuseError::io(format!("create {}", out.display()), e))?;
            for spec in rho.split(',') {
                let r: f64 = spec
                    .trim()
                    .parse()
                    .map_err(|_| AmuseError::Config(format!("bad rho value '{spec}'")))?;
                let plot = schedule_viz(beta1, r, t0, t_max)?;
                let sum: f64 = plot.alpha.iter().sum();
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(AmuseError::InvalidArgument(format!(
                        "alpha weights sum to {sum}, expected 1"
                    )));
                }
                let path = out.join(format!("schedule-beta{beta1}-rho{r}.csv"));
                std::fs::write(&path, schedule_to_csv(&plot))
                    .map_err(|e| AmuseError::io(format!("write {}", path.display()), e))?;
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify => {
            let results = run_fast_criteria();
            print!("{}", format_table(&results));
            if results.iter().all(|r| r.passed) {
                println!("all criteria passed");
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}
