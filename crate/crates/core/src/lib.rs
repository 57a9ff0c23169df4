pub mod causal;
pub mod data;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod ml;
pub mod rng;

pub use error::{Error, Result};
