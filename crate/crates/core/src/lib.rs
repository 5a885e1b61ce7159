//! Bayesian ordinal probit regression over several annotation scales that
//! share one latent linear predictor.

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
