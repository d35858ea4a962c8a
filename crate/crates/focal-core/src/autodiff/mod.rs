//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records every primitive executed during a forward pass in
//! order; [`Tape::backward`] replays the record once in reverse, pushing
//! gradients from a scalar loss back into the [`Tensor`] leaves. Gradients
//! for leaves used in several places accumulate by summation.

mod gradcheck;
mod tape;
mod tensor;

#[cfg(test)]
mod tests;

pub use gradcheck::{grad_check, grad_check_params};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
