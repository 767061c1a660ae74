//! Orthogonalized-momentum and schedule-free optimizers, plus the Hessian
//! dominant/bulk subspace analysis harness needed to study them at desk
//! scale.
//!
//! The crate is organized around seven concerns:
//!
//! - [`linalg`]: dense matrices, Newton-Schulz orthogonalization, and an
//!   exact polar-factor oracle.
//! - [`net`]: a small MLP classifier with exact reverse-mode gradients and
//!   Hessian-vector products.
//! - [`data`]: IDX ingestion, a synthetic Gaussian classification task, and
//!   deterministic batching.
//! - [`optim`]: SGD, AdamW, Muon, the schedule-free wrapper, SF-Muon, and
//!   AMUSE, with their averaging identities exposed as oracles.
//! - [`spectral`]: matrix-free Lanczos, dominant/bulk ratios, and
//!   read-only gradient probes.
//! - [`exp`]: scripted experiments emitting deterministic CSV metrics.
//! - [`checkpoint`]: the versioned binary container for models and
//!   optimizer state.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod exp;
pub mod linalg;
pub mod net;
pub mod optim;
pub mod rng;
pub mod spectral;
pub mod verify;

pub use error::{AmuseError, Result};
