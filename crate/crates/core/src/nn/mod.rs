//! Minimal dense network kernel shared by both parties and the baseline.

mod matrix;
mod mlp;

pub use matrix::{dot, matmul, matmul_nt, matmul_tn, Matrix};
pub use mlp::{Activation, ForwardCache, MlpModel, ParamGrads};
