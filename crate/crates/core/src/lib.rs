//! Latent Wasserstein adversarial imitation from a single state-only
//! demonstration, with exact oracles for every learned component.

pub mod critic;
pub mod datasets;
pub mod envs;
pub mod error;
pub mod icvf;
pub mod oracle;
pub mod pipeline;
pub mod reporting;
pub mod td3;

pub use error::{LwailError, Result};
