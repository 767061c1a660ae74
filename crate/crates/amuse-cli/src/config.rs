//! Declarative run configuration: TOML file, flag overrides, materialized
//! defaults, and the reproducibility manifest.

use amuse::data::{load_idx, synthetic_gaussian, take_first, Dataset};
use amuse::error::AmuseError;
use amuse::exp::{ProbeSet, RunSpec};
use amuse::net::Activation;
use amuse::optim::OptimizerConfig;
use amuse::spectral::ProbeAnchor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Synthetic: sample count.
    pub n: usize,
    /// Synthetic: feature dimension.
    pub dim: usize,
    /// Synthetic: class count.
    pub classes: usize,
    /// Synthetic: pairwise mean distance between clusters.
    pub separation: f64,
    /// Synthetic: generation seed (independent of the run seed).
    pub seed: u64,
    /// IDX: image and label file paths.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Keep only the first N samples after loading.
    pub take_first: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            n: 5000,
            dim: 64,
            classes: 10,
            separation: 3.0,
            seed: 42,
            images: None,
            labels: None,
            take_first: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![200, 200],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbesConfig {
    pub set: ProbeSet,
    pub cadence: u64,
    pub start: u64,
    pub lanczos_iters: usize,
    /// Subspace dimension; defaults to the class count.
    pub k: Option<usize>,
    pub alphas: Vec<f64>,
    pub anchor: ProbeAnchor,
}

impl Default for ProbesConfig {
    fn default() -> Self {
        Self {
            set: ProbeSet {
                subspace: true,
                grad_alpha: false,
                norms: true,
                cosine: true,
            },
            cadence: 50,
            start: 1,
            lanczos_iters: 60,
            k: None,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            anchor: ProbeAnchor::EvalPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub steps: u64,
    pub batch_size: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_cadence: u64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub probes: ProbesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: "train".into(),
            seed: 0,
            out_dir: PathBuf::from("runs"),
            steps: 1000,
            batch_size: 50,
            checkpoint_cadence: 500,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            probes: ProbesConfig::default(),
        }
    }
}

/// Where a materialized config value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    File,
    Flag,
    Default,
}

pub struct LoadedConfig {
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Provenance>,
}

/// Parses `key.path=value` override strings into TOML fragments.
fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value), AmuseError> {
    let (path, raw) = s
        .split_once('=')
        .ok_or_else(|| AmuseError::Config(format!("override '{s}' is not key=value")))?;
    let keys: Vec<String> = path.split('.').map(|k| k.trim().to_string()).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(AmuseError::Config(format!("override '{s}' has an empty key")));
    }
    // Interpret the value as TOML; fall back to a string literal.
    let value: toml::Value = raw
        .parse::<toml::Value>()
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
    Ok((keys, value))
}

fn insert_path(table: &mut toml::Table, keys: &[String], value: toml::Value) {
    if keys.len() == 1 {
        table.insert(keys[0].clone(), value);
        return;
    }
    let entry = table
        .entry(keys[0].clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if !entry.is_table() {
        *entry = toml::Value::Table(toml::Table::new());
    }
    insert_path(entry.as_table_mut().unwrap(), &keys[1..], value);
}

fn collect_paths(value: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let next = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                collect_paths(v, &next, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn collect_json_paths(value: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let next = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                collect_json_paths(v, &next, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

/// Loads a config file (optional) and applies `key=value` overrides; every
/// materialized leaf is classified by provenance.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, AmuseError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                AmuseError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            text.parse::<toml::Table>()
                .map_err(|e| AmuseError::Config(format!("config parse error: {e}")))?
        }
        None => toml::Table::new(),
    };

    let mut file_paths = Vec::new();
    collect_paths(&toml::Value::Table(table.clone()), "", &mut file_paths);

    let mut flag_paths = Vec::new();
    for o in overrides {
        let (keys, value) = parse_override(o)?;
        flag_paths.push(keys.join("."));
        insert_path(&mut table, &keys, value);
    }

    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| AmuseError::Config(format!("{e}")))?;
    config.optimizer.validate()?;
    validate(&config)?;

    // Every leaf of the materialized config is classified.
    let full = serde_json::to_value(&config).expect("config serializes");
    let mut all_paths = Vec::new();
    collect_json_paths(&full, "", &mut all_paths);
    let mut provenance = BTreeMap::new();
    for p in all_paths {
        let tag = if flag_paths.iter().any(|f| f == &p) {
            Provenance::Flag
        } else if file_paths.iter().any(|f| f == &p) {
            Provenance::File
        } else {
            Provenance::Default
        };
        provenance.insert(p, tag);
    }

    Ok(LoadedConfig { config, provenance })
}

fn validate(cfg: &RunConfig) -> Result<(), AmuseError> {
    if cfg.steps < 1 || cfg.batch_size < 1 || cfg.probes.cadence < 1 {
        return Err(AmuseError::Config(
            "steps, batch_size, and probes.cadence must be at least 1".into(),
        ));
    }
    if cfg.model.hidden.is_empty() {
        return Err(AmuseError::Config(
            "model.hidden must list at least one hidden width".into(),
        ));
    }
    match cfg.dataset.kind {
        DatasetKind::Synthetic => {
            if cfg.dataset.classes < 2 {
                return Err(AmuseError::Config(
                    "dataset.classes must be at least 2 (valid range: >= 2)".into(),
                ));
            }
        }
        DatasetKind::Idx => {
            for (name, p) in [
                ("dataset.images", &cfg.dataset.images),
                ("dataset.labels", &cfg.dataset.labels),
            ] {
                match p {
                    None => {
                        return Err(AmuseError::Config(format!(
                            "{name} is required for idx datasets"
                        )))
                    }
                    Some(p) if !p.exists() => {
                        return Err(AmuseError::Config(format!(
                            "{name} path {} does not exist",
                            p.display()
                        )))
                    }
                    _ => {}
                }
            }
        }
    }
    for &a in &cfg.probes.alphas {
        if !(0.0..=1.0).contains(&a) {
            return Err(AmuseError::Config(format!(
                "probe alpha {a} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Builds the dataset the config describes.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset, AmuseError> {
    let ds = match cfg.dataset.kind {
        DatasetKind::Synthetic => synthetic_gaussian(
            cfg.dataset.seed,
            cfg.dataset.n,
            cfg.dataset.dim,
            cfg.dataset.classes,
            cfg.dataset.separation,
        )?,
        DatasetKind::Idx => load_idx(
            cfg.dataset.images.as_ref().unwrap(),
            cfg.dataset.labels.as_ref().unwrap(),
        )?,
    };
    match cfg.dataset.take_first {
        Some(n) => take_first(&ds, n),
        None => Ok(ds),
    }
}

/// Maps a config + dataset onto a library run specification.
pub fn to_run_spec(cfg: &RunConfig, ds: &Dataset) -> RunSpec {
    let mut dims = Vec::with_capacity(cfg.model.hidden.len() + 2);
    dims.push(ds.feature_dim());
    dims.extend_from_slice(&cfg.model.hidden);
    dims.push(ds.num_classes);
    RunSpec {
        name: cfg.experiment.clone(),
        model_dims: dims,
        activation: cfg.model.activation,
        seed: cfg.seed,
        optimizer: cfg.optimizer.clone(),
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        probes: cfg.probes.set,
        probe_cadence: cfg.probes.cadence,
        probe_start: cfg.probes.start,
        lanczos_k: cfg.probes.k,
        lanczos_iters: cfg.probes.lanczos_iters,
        alphas: cfg.probes.alphas.clone(),
        probe_anchor: cfg.probes.anchor,
        scaling: None,
        checkpoint_cadence: (cfg.checkpoint_cadence > 0).then_some(cfg.checkpoint_cadence),
    }
}

/// The run directory, honoring the output-root environment override.
pub fn resolve_out_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os("AMUSE_OUT_ROOT") {
        Some(root) => PathBuf::from(root).join(&cfg.out_dir),
        None => cfg.out_dir.clone(),
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub code_version: &'a str,
    pub config: &'a RunConfig,
    pub provenance: &'a BTreeMap<String, Provenance>,
}

/// Writes the manifest that suffices to reproduce the run byte-identically.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    loaded: &LoadedConfig,
) -> Result<(), AmuseError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AmuseError::io(format!("create {}", dir.display()), e))?;
    let manifest = Manifest {
        command,
        code_version: env!("CARGO_PKG_VERSION"),
        config: &loaded.config,
        provenance: &loaded.provenance,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join("manifest.json");
    std::fs::write(&path, json).map_err(|e| AmuseError::io(format!("write {}", path.display()), e))
}
