//! Versioned binary container for models, optimizer state, and eigenbases.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "AMSK" | version u32 | layer count u32
//! per layer: rows u64 | cols u64 | rows*cols f64 (weight)
//!            rows u64 | cols u64 | cols f64      (bias, as a 1 x n block)
//! ```
//!
//! Optimizer checkpoints append a state section after the model (which
//! holds the gradient-evaluation point): step counter, running sum of
//! squared learning rates, averaging bookkeeping, then per-slot buffers
//! and, for schedule-free kinds, the z and x sequences. Round-trips are
//! bit-exact; resuming reproduces the uninterrupted trajectory bitwise.

use crate::error::{AmuseError, Result};
use crate::linalg::DenseMatrix;
use crate::net::{Activation, Layer, MlpModel};
use crate::optim::{Optimizer, OptimizerConfig, SlotState};
use crate::spectral::EigenBasis;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"AMSK";
pub const FORMAT_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())
        .map_err(|e| AmuseError::io("write u32", e))
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())
        .map_err(|e| AmuseError::io("write u64", e))
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())
        .map_err(|e| AmuseError::io("write f64", e))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| AmuseError::Format(format!("truncated checkpoint (u32): {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| AmuseError::Format(format!("truncated checkpoint (u64): {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| AmuseError::Format(format!("truncated checkpoint (f64): {e}")))?;
    Ok(f64::from_le_bytes(b))
}

fn write_matrix(w: &mut impl Write, m: &DenseMatrix) -> Result<()> {
    write_u64(w, m.rows() as u64)?;
    write_u64(w, m.cols() as u64)?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for &x in m.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
        .map_err(|e| AmuseError::io("write matrix data", e))
}

fn read_matrix(r: &mut impl Read) -> Result<DenseMatrix> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > (1 << 32) {
        return Err(AmuseError::Format(format!(
            "implausible matrix block {rows}x{cols}"
        )));
    }
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| AmuseError::Format(format!("truncated matrix data: {e}")))?;
    // Preserve payload bits verbatim, bypassing the finiteness gate of the
    // public constructor.
    let mut m = DenseMatrix::zeros(rows, cols);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        m.data_mut()[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(m)
}

fn write_header(w: &mut impl Write, layer_count: u32) -> Result<()> {
    w.write_all(&MAGIC)
        .map_err(|e| AmuseError::io("write magic", e))?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, layer_count)
}

fn read_header(r: &mut impl Read) -> Result<u32> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| AmuseError::Format(format!("truncated checkpoint (magic): {e}")))?;
    if magic != MAGIC {
        return Err(AmuseError::Format(format!(
            "bad checkpoint magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(AmuseError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    read_u32(r)
}

fn model_section(w: &mut impl Write, model: &MlpModel) -> Result<()> {
    for l in &model.layers {
        write_matrix(w, &l.weight)?;
        let bias = DenseMatrix::new(1, l.bias.len(), l.bias.clone())?;
        write_matrix(w, &bias)?;
    }
    Ok(())
}

fn read_model_section(
    r: &mut impl Read,
    layer_count: u32,
    activation: Activation,
) -> Result<MlpModel> {
    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        let weight = read_matrix(r)?;
        let bias = read_matrix(r)?;
        if bias.rows() != 1 || bias.cols() != weight.cols() {
            return Err(AmuseError::Format(format!(
                "bias block {}x{} does not match weight {}x{}",
                bias.rows(),
                bias.cols(),
                weight.rows(),
                weight.cols()
            )));
        }
        layers.push(Layer {
            weight,
            bias: bias.into_data(),
        });
    }
    Ok(MlpModel { layers, activation })
}

/// Saves model parameters.
pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| AmuseError::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, model.layers.len() as u32)?;
    model_section(&mut w, model)?;
    w.flush().map_err(|e| AmuseError::io("flush checkpoint", e))
}

/// Loads model parameters. The activation is not part of the container and
/// comes from the run manifest.
pub fn load_model(path: &Path, activation: Activation) -> Result<MlpModel> {
    let file = File::open(path)
        .map_err(|e| AmuseError::io(format!("open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let layer_count = read_header(&mut r)?;
    read_model_section(&mut r, layer_count, activation)
}

const RULE_MUON: u8 = 0;
const RULE_HEAVY: u8 = 1;
const RULE_ADAMW: u8 = 2;

/// Saves the model (gradient point) plus full optimizer state.
pub fn save_optimizer(model: &MlpModel, opt: &Optimizer, path: &Path) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| AmuseError::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, model.layers.len() as u32)?;
    model_section(&mut w, model)?;

    let s = &opt.state;
    write_u64(&mut w, s.t)?;
    write_f64(&mut w, s.sum_eta_sq)?;
    write_f64(&mut w, s.c_current)?;
    w.write_all(&[s.c_t0.is_some() as u8])
        .map_err(|e| AmuseError::io("write flag", e))?;
    write_f64(&mut w, s.c_t0.unwrap_or(0.0))?;
    write_f64(&mut w, s.beta_y)?;
    write_u32(&mut w, s.slots.len() as u32)?;
    for slot in &s.slots {
        match slot {
            SlotState::Muon { m } => {
                w.write_all(&[RULE_MUON])
                    .map_err(|e| AmuseError::io("write tag", e))?;
                write_matrix(&mut w, m)?;
            }
            SlotState::HeavyBall { m } => {
                w.write_all(&[RULE_HEAVY])
                    .map_err(|e| AmuseError::io("write tag", e))?;
                write_matrix(&mut w, m)?;
            }
            SlotState::AdamW { m, v } => {
                w.write_all(&[RULE_ADAMW])
                    .map_err(|e| AmuseError::io("write tag", e))?;
                w.write_all(&[m.is_some() as u8])
                    .map_err(|e| AmuseError::io("write flag", e))?;
                if let Some(m) = m {
                    write_matrix(&mut w, m)?;
                }
                write_matrix(&mut w, v)?;
            }
        }
    }
    let sf = !s.z.is_empty();
    w.write_all(&[sf as u8])
        .map_err(|e| AmuseError::io("write flag", e))?;
    if sf {
        for m in &s.z {
            write_matrix(&mut w, m)?;
        }
        for m in &s.x {
            write_matrix(&mut w, m)?;
        }
    }
    w.flush().map_err(|e| AmuseError::io("flush checkpoint", e))
}

/// Restores a model and optimizer saved by [`save_optimizer`].
///
/// The configuration comes from the manifest; it must describe the same
/// optimizer family the checkpoint was taken from.
pub fn load_optimizer(
    path: &Path,
    cfg: OptimizerConfig,
    activation: Activation,
) -> Result<(MlpModel, Optimizer)> {
    let file = File::open(path)
        .map_err(|e| AmuseError::io(format!("open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let layer_count = read_header(&mut r)?;
    let model = read_model_section(&mut r, layer_count, activation)?;

    let mut opt = Optimizer::new(&model, cfg)?;
    let t = read_u64(&mut r)?;
    let sum_eta_sq = read_f64(&mut r)?;
    let c_current = read_f64(&mut r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)
        .map_err(|e| AmuseError::Format(format!("truncated checkpoint: {e}")))?;
    let c_t0_val = read_f64(&mut r)?;
    let c_t0 = (flag[0] == 1).then_some(c_t0_val);
    let beta_y = read_f64(&mut r)?;
    let slot_count = read_u32(&mut r)? as usize;
    if slot_count != opt.state.slots.len() {
        return Err(AmuseError::Format(format!(
            "checkpoint has {slot_count} slots, expected {}",
            opt.state.slots.len()
        )));
    }
    let mut slots = Vec::with_capacity(slot_count);
    for i in 0..slot_count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)
            .map_err(|e| AmuseError::Format(format!("truncated checkpoint: {e}")))?;
        let expected = match opt.state.slots[i] {
            SlotState::Muon { .. } => RULE_MUON,
            SlotState::HeavyBall { .. } => RULE_HEAVY,
            SlotState::AdamW { .. } => RULE_ADAMW,
        };
        if tag[0] != expected {
            return Err(AmuseError::Format(format!(
                "slot {i} rule tag {} does not match the configured optimizer (expected {expected})",
                tag[0]
            )));
        }
        let slot = match tag[0] {
            RULE_MUON => SlotState::Muon {
                m: read_matrix(&mut r)?,
            },
            RULE_HEAVY => SlotState::HeavyBall {
                m: read_matrix(&mut r)?,
            },
            _ => {
                let mut f = [0u8; 1];
                r.read_exact(&mut f)
                    .map_err(|e| AmuseError::Format(format!("truncated checkpoint: {e}")))?;
                let m = if f[0] == 1 {
                    Some(read_matrix(&mut r)?)
                } else {
                    None
                };
                SlotState::AdamW {
                    m,
                    v: read_matrix(&mut r)?,
                }
            }
        };
        slots.push(slot);
    }
    let mut f = [0u8; 1];
    r.read_exact(&mut f)
        .map_err(|e| AmuseError::Format(format!("truncated checkpoint: {e}")))?;
    if (f[0] == 1) != opt.cfg.kind.is_schedule_free() {
        return Err(AmuseError::Format(
            "checkpoint sequence section does not match the configured optimizer kind".into(),
        ));
    }
    let (z, x) = if f[0] == 1 {
        let mut z = Vec::with_capacity(slot_count);
        for _ in 0..slot_count {
            z.push(read_matrix(&mut r)?);
        }
        let mut x = Vec::with_capacity(slot_count);
        for _ in 0..slot_count {
            x.push(read_matrix(&mut r)?);
        }
        (z, x)
    } else {
        (Vec::new(), Vec::new())
    };

    opt.state.t = t;
    opt.state.sum_eta_sq = sum_eta_sq;
    opt.state.c_current = c_current;
    opt.state.c_t0 = c_t0;
    opt.state.beta_y = beta_y;
    opt.state.slots = slots;
    opt.state.z = z;
    opt.state.x = x;
    Ok((model, opt))
}

/// Exports an eigenbasis: eigenvalues and residuals as CSV, eigenvectors
/// and the anchor as matrix blocks in the binary container.
pub fn save_basis(basis: &EigenBasis, csv_path: &Path, bin_path: &Path) -> Result<()> {
    let mut csv = String::from("index,eigenvalue,residual\n");
    for (i, (l, r)) in basis.eigenvalues.iter().zip(&basis.residuals).enumerate() {
        csv.push_str(&format!("{i},{l},{r}\n"));
    }
    std::fs::write(csv_path, csv)
        .map_err(|e| AmuseError::io(format!("write {}", csv_path.display()), e))?;

    let file = File::create(bin_path)
        .map_err(|e| AmuseError::io(format!("create {}", bin_path.display()), e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, 1)?;
    let k = basis.k();
    let dim = basis.dim();
    let mut flat = Vec::with_capacity(k * dim);
    for v in &basis.eigenvectors {
        flat.extend_from_slice(v);
    }
    let vectors = DenseMatrix::new(k, dim, flat)?;
    write_matrix(&mut w, &vectors)?;
    let anchor = DenseMatrix::new(1, dim, basis.anchor.clone())?;
    write_matrix(&mut w, &anchor)?;
    w.flush().map_err(|e| AmuseError::io("flush basis", e))
}
