//! Small feed-forward classifier with exact gradients and Hessian-vector
//! products, plus its finite-difference oracles and a quadratic test model.

mod fd;
mod mlp;
mod quadratic;

pub use fd::{finite_diff_grad, finite_diff_grad_at, finite_diff_hvp};
pub use mlp::{Activation, Batch, GradSet, HvpWorkspace, Layer, MlpModel};
pub use quadratic::QuadraticModel;
