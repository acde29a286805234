//! Dense matrices, seeded randomness and a differentiable tape.

pub mod linalg;
mod matrix;
mod rng;
mod tape;

pub use matrix::Matrix;
pub use rng::Rng;
pub use tape::{NodeId, Tape};
