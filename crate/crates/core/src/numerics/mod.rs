//! Tensors, a define-by-run differentiation tape, Adam, and checkpoints.

mod adam;
pub mod gradcheck;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use params::{format_f64, ParamStore};
pub use tape::{sigmoid, softmax_in_place, EdgeIndex, Gradients, SparseMatrix, Tape, Var, NORM_FLOOR};
pub use tensor::Tensor;
