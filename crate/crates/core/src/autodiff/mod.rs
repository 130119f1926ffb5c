//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Just enough to train small MLPs: a [`Tape`] records forward operations and
//! [`Tape::backward`] sweeps them once in reverse. Broadcasting is limited to
//! adding a bias row across the batch dimension.

mod adam;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
