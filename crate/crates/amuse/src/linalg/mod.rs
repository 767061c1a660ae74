//! Dense matrix arithmetic, vectorization, and orthogonalization.

mod matrix;
pub mod newton_schulz;
pub mod polar;

pub use matrix::{cosine_similarity, de_vectorize, dot, gemm, norm, vectorize, DenseMatrix};
pub use newton_schulz::{newton_schulz, NsCoeffs, MUON_FAST_ITERS};
pub use polar::{polar_factor_oracle, singular_values, symmetric_eigen};
