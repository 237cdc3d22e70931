pub mod apps;
pub mod coreset;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod netgen;
pub mod parallel;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
