//! Dataset ingestion: IDX files, a synthetic Gaussian-mixture task, and
//! deterministic batching.

mod dataset;
mod idx;
mod synthetic;

pub use dataset::{batches, take_first, Dataset};
pub use idx::{export_idx, load_idx};
pub use synthetic::synthetic_gaussian;
