pub mod crl;
pub mod diffusion;
pub mod envs;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod pcn;
pub mod reverse;
pub mod rng;
pub mod store;

pub use error::{Error, Result};
