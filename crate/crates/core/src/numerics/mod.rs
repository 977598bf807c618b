//! Dense `f64` tensors and a define-by-run reverse-mode autodiff graph.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{check_objective, grad_check, GradCheckReport};
pub use graph::{conv_output_len, toeplitz_unroll, Gradients, Graph, NodeId};
pub(crate) use graph::softmax;
pub use tensor::Tensor;
