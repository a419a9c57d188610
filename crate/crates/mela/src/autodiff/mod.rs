//! Minimal reverse-mode automatic differentiation and the optimizer used
//! for all training. 64-bit floats throughout; single-threaded tapes.

pub mod adam;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Tape, Var};
pub use tensor::{softmax_stable, Tensor};
