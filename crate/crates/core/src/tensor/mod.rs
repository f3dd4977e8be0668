//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every op of a forward pass in creation order;
//! [`Tape::backward`] walks it in reverse once. Model parameters live in a
//! [`ParamStore`] outside the tape and are bound as leaves per forward pass.

mod array;
pub mod gradcheck;
pub mod ops;
mod params;
mod tape;

pub use array::{Float, Tensor};
pub use params::{bias_uniform, kaiming_uniform, Param, ParamStore};
pub use tape::{Tape, Var};

/// Whether layers use batch statistics and dropout (train) or not (eval).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}
