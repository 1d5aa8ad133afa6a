//! Chart auto-encoders: multi-chart latent models for data on manifolds,
//! together with an exact compiler from piecewise-linear functions on
//! simplicial complexes to ReLU networks.

pub mod cae;
pub mod error;
pub mod manifolds;
pub mod metrics;
pub mod simplicial;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
