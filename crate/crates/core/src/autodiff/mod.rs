//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod graph;
pub mod gradcheck;
mod tensor;

pub use graph::{sigmoid, softmax_in_place, Binary, Graph, PoolKind, ReduceKind, Unary, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
