pub mod corrector;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod qmc;
pub mod sampler;

pub use error::{Error, Result};
