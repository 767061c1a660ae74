//! In-memory dataset and deterministic batching.

use crate::error::{AmuseError, Result};
use crate::linalg::DenseMatrix;
use crate::net::Batch;
use crate::rng::AmuseRng;

/// A labeled classification dataset. Features live in [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: DenseMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() || inputs.rows() != labels.len() {
            return Err(AmuseError::ShapeMismatch {
                context: "Dataset::new".into(),
                expected: format!("{} labels", inputs.rows()),
                actual: format!("{} labels", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(AmuseError::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if num_classes > 1 {
            let mut seen = vec![false; num_classes];
            for &l in &labels {
                seen[l] = true;
            }
            if let Some(missing) = seen.iter().position(|&s| !s) {
                return Err(AmuseError::InvalidArgument(format!(
                    "class {missing} has no samples"
                )));
            }
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// The whole dataset as a single batch, order preserved.
    pub fn as_batch(&self) -> Batch {
        Batch::new(self.inputs.clone(), self.labels.clone()).expect("dataset is a valid batch")
    }

    /// Per-class sample counts.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.num_classes];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }
}

/// Prefix subset of the first `n` samples, order preserved.
pub fn take_first(ds: &Dataset, n: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(AmuseError::InvalidArgument(
            "take_first: subset size must be positive".into(),
        ));
    }
    if n > ds.len() {
        return Err(AmuseError::InvalidArgument(format!(
            "take_first: requested {n} of {} samples",
            ds.len()
        )));
    }
    let d = ds.feature_dim();
    let inputs = DenseMatrix::new(n, d, ds.inputs.data()[..n * d].to_vec())?;
    Dataset::new(inputs, ds.labels[..n].to_vec(), ds.num_classes)
}

/// Deterministic shuffled minibatches for one epoch.
///
/// The permutation is keyed by `(seed, epoch)`; the final partial batch is
/// kept. Identical keys produce identical batch sequences.
pub fn batches(ds: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let n = ds.len();
    let d = ds.feature_dim();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = AmuseRng::for_stream(seed, 0xb417c4 ^ epoch);
    rng.shuffle(&mut order);

    let mut out = Vec::with_capacity(n.div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let mut data = Vec::with_capacity(chunk.len() * d);
        let mut labels = Vec::with_capacity(chunk.len());
        for &i in chunk {
            data.extend_from_slice(ds.inputs.row(i));
            labels.push(ds.labels[i]);
        }
        let inputs = DenseMatrix::new(chunk.len(), d, data).expect("batch slice");
        out.push(Batch::new(inputs, labels).expect("batch labels"));
    }
    out
}
