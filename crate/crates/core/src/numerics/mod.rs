//! Dense kernels, seeded randomness and the loss/normalization primitives
//! shared by the model code.

mod matrix;
mod ops;
mod rng;

pub use matrix::{dot, Matrix, Real};
pub(crate) use matrix::{gemm, gemm_tn_acc};
pub use ops::{cross_entropy, finite_diff_grad, rms_norm, softmax};
pub(crate) use ops::{rms_norm_backward, rms_norm_into, sigmoid, softmax_wide};
pub use rng::{RngAlgorithm, RngState, SeededRng};
