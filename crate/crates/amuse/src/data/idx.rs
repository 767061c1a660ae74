//! IDX container parsing and export (the MNIST on-disk format).
//!
//! Images: big-endian magic 0x00000803, count, rows, cols, then one u8 per
//! pixel. Labels: magic 0x00000801, count, one u8 per label. Pixels are
//! scaled by 1/255 on load.

use crate::error::{AmuseError, Result};
use crate::linalg::DenseMatrix;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| AmuseError::Format(format!("truncated file while reading {what}: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an images/labels IDX pair into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = File::open(images_path)
        .map_err(|e| AmuseError::io(format!("open {}", images_path.display()), e))?;
    let mut images = BufReader::new(images);

    let magic = read_u32_be(&mut images, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(AmuseError::Format(format!(
            "bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n_img = read_u32_be(&mut images, "image count")? as usize;
    let rows = read_u32_be(&mut images, "image rows")? as usize;
    let cols = read_u32_be(&mut images, "image cols")? as usize;
    let d = rows * cols;
    let mut pixels = vec![0u8; n_img * d];
    images
        .read_exact(&mut pixels)
        .map_err(|e| AmuseError::Format(format!("truncated image data: {e}")))?;

    let labels_file = File::open(labels_path)
        .map_err(|e| AmuseError::io(format!("open {}", labels_path.display()), e))?;
    let mut labels_file = BufReader::new(labels_file);
    let magic = read_u32_be(&mut labels_file, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(AmuseError::Format(format!(
            "bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_lbl = read_u32_be(&mut labels_file, "label count")? as usize;
    if n_lbl != n_img {
        return Err(AmuseError::Format(format!(
            "count mismatch: {n_img} images but {n_lbl} labels"
        )));
    }
    let mut raw_labels = vec![0u8; n_lbl];
    labels_file
        .read_exact(&mut raw_labels)
        .map_err(|e| AmuseError::Format(format!("truncated label data: {e}")))?;

    let data: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = DenseMatrix::new(n_img, d, data)?;
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(inputs, labels, num_classes)
}

/// Writes a dataset back out as an IDX pair.
///
/// Features are quantized to `round(x * 255)` clamped to u8, which loses at
/// most 1/510 per feature; loading the exported pair recovers the dataset
/// up to that quantization. The image geometry is written as `n x d x 1`.
pub fn export_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let file = File::create(images_path)
        .map_err(|e| AmuseError::io(format!("create {}", images_path.display()), e))?;
    let mut w = BufWriter::new(file);
    let n = ds.len() as u32;
    let d = ds.feature_dim() as u32;
    w.write_all(&IMAGE_MAGIC.to_be_bytes())
        .and_then(|_| w.write_all(&n.to_be_bytes()))
        .and_then(|_| w.write_all(&d.to_be_bytes()))
        .and_then(|_| w.write_all(&1u32.to_be_bytes()))
        .map_err(|e| AmuseError::io("write image header", e))?;
    let mut bytes = Vec::with_capacity(ds.inputs.len());
    for &x in ds.inputs.data() {
        bytes.push((x * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    w.write_all(&bytes)
        .map_err(|e| AmuseError::io("write image data", e))?;
    w.flush().map_err(|e| AmuseError::io("flush images", e))?;

    let file = File::create(labels_path)
        .map_err(|e| AmuseError::io(format!("create {}", labels_path.display()), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&LABEL_MAGIC.to_be_bytes())
        .and_then(|_| w.write_all(&n.to_be_bytes()))
        .map_err(|e| AmuseError::io("write label header", e))?;
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    w.write_all(&labels)
        .map_err(|e| AmuseError::io("write label data", e))?;
    w.flush().map_err(|e| AmuseError::io("flush labels", e))
}
