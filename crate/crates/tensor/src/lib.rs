//! Minimal dense-tensor math with tape-based reverse-mode differentiation,
//! a finite-difference gradient checker and a named-tensor checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod float;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod ops;
pub mod param;
pub mod rng;
pub mod tensor;

pub use error::{Result, TensorError};
pub use float::{DType, Float};
pub use graph::{Graph, Var, GATHER_PAD};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
