//! Dense `f64` tensors, a define-by-run reverse-mode autodiff graph, Adam,
//! finite-difference gradient checks and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use gradcheck::{check_params, finite_diff_check, ParamCheck};
pub use graph::{Axis, Graph, Pool, Var};
pub use params::{uniform, xavier_uniform, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
