pub mod analysis;
pub mod error;
pub mod estimator;
pub mod harness;
mod linalg;
pub mod model;
pub mod scenario;

pub use error::{Error, Result};
