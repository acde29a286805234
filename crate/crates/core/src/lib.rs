pub mod data;
pub mod error;
pub mod evalcls;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod trainer;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, ErrorKind, Result};
pub use numcore::{Matrix, NodeId, Rng, Tape};
