//! Frequency-enhanced hybrid attention for sequential recommendation.
//!
//! The crate is organized bottom-up:
//!
//! * [`spectral`]: real FFT, half spectra and circular correlation;
//! * [`ramp`]: per-layer frequency bands and band-limiting;
//! * [`encoder`]: embedding, hybrid attention blocks and the prediction head,
//!   each with a hand-written backward pass;
//! * [`training`]: losses, Adam and the training step;
//! * [`data`]: interaction logs, k-core filtering, leave-one-out splits and
//!   batching;
//! * [`eval`]: full-ranking HR@n / NDCG@n and attention export;
//! * [`check`]: the self-check suite run by `fearec check`.

pub mod error;
pub mod rng;
pub mod ramp;
pub mod spectral;
pub mod encoder;
pub mod data;
pub mod training;
pub mod eval;
pub mod checkpoint;
pub mod check;
mod par;

pub use error::{Error, Result};
