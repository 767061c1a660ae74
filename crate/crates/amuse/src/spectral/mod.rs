//! Hessian eigen-analysis: matrix-free Lanczos, dominant/bulk projections,
//! and read-only gradient probes.

mod basis;
mod lanczos;
mod probe;

pub use basis::{dominant_ratio, scale_update, EigenBasis};
pub use lanczos::{lanczos_topk, lanczos_topk_dense, RESIDUAL_TOL};
pub use probe::{basis_at_current, grad_probe_alpha, AlphaProbeResult, ProbeAnchor};
