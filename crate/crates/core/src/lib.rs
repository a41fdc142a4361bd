//! Equalizer parameter optimization driven by a learned latent
//! signal-integrity metric.
//!
//! The crate covers the whole chain: a synthetic lossy NRZ link, CTLE/DFE
//! models, eye-diagram window measurement, a small dense-network substrate,
//! the classifier-augmented autoencoder with its anchor point, the one-step
//! advantage actor-critic tuner, and the baseline optimizers it is compared
//! against.

pub mod a2c;
pub mod baselines;
pub mod channel;
pub mod equalizer;
pub mod error;
pub mod eye;
pub mod latent;
pub mod neural;
pub mod signal;

pub use error::{Error, Result};
