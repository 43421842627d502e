//! Undetectable steganography and watermarking for token-generating models.
//!
//! A secret key drives a pseudorandom function whose values replace the
//! sampler's randomness. Without the key the output is distributed exactly
//! as the model's own samples; with it, a retriever recovers a payload from
//! the bare bits of the response.
//!
//! * [`prf`]: keyed unit-interval PRF with a fixed input encoding.
//! * [`model`]: model interface, binary reduction, entropy ledger, and the
//!   pluggable model family.
//! * [`ecc`]: backspace code over a noiseless-feedback channel.
//! * [`watermark`]: single-bit keyed watermark and its detector.
//! * [`steg`]: payload embedding and retrieval schemes.
//! * [`analysis`]: entropy profiles and capacity sweeps.

pub mod analysis;
pub mod ecc;
pub mod error;
pub mod generate;
pub mod model;
pub mod prf;
pub mod steg;
pub mod watermark;

pub use error::{Error, Result};
