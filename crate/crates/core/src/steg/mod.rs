//! Payload embedding and retrieval.
//!
//! Two schemes share one channel (see [`channel`]):
//!
//! * `one-query`: every bit is keyed by `F_k(i, next)`, where `next` is the
//!   code symbol the feedback ECC wants to send. Undetectable for a single
//!   response per key.
//! * `full`: collects `lambda` bits of true-random entropy into a prefix `r`,
//!   plants a plain watermark under `F_k(r, i, None)` until its score clears
//!   `lambda * sqrt(len)`, then runs the one-query scheme under
//!   `F_k(r, i, next)`. Undetectable across any number of responses.
//!
//! Schemes are looked up by name through [`SchemeRegistry`].

pub mod channel;
mod full;
mod one_query;
pub mod payload;
mod saturation;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ecc::{CodeSymbol, EccState};
use crate::error::{Error, Result};
use crate::generate::{BitStep, GenerateOptions, Transcript};
use crate::model::{Model, Prompt};
use crate::prf::{BoundPrf, UnitPrf};

pub use channel::{ChunkReceiver, ScoreState};
pub use full::FullScheme;
pub use one_query::OneQueryScheme;
pub use saturation::{saturation_check, saturation_threshold, SaturationVerdict};

pub const DEFAULT_LAMBDA_BITS: usize = 16;
pub const PRODUCTION_LAMBDA_BITS: usize = 128;
pub const DEFAULT_THRESHOLD: f64 = 2.0;
/// Verification of a candidate prefix gives up after this many bits per
/// unit of lambda.
pub const VERIFY_CAP_PER_LAMBDA: usize = 64;

/// `{lambda_bits, threshold_t, scored_bits_per_token, max_payload_bits}`;
/// `epsilon` and `framed` are optional extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StegConfig {
    pub lambda_bits: usize,
    pub threshold_t: f64,
    /// Documentation only: the feedback code needs no error budget to encode.
    pub epsilon: f64,
    /// Score and key only the first `m` bits of each token.
    pub scored_bits_per_token: Option<usize>,
    /// Stop taking symbols once this many bits are decoded.
    pub max_payload_bits: Option<usize>,
    /// Payload carries a 16-bit length header; retrieval stops at its end.
    pub framed: bool,
}

impl Default for StegConfig {
    fn default() -> Self {
        StegConfig {
            lambda_bits: DEFAULT_LAMBDA_BITS,
            threshold_t: DEFAULT_THRESHOLD,
            epsilon: 0.25,
            scored_bits_per_token: None,
            max_payload_bits: None,
            framed: true,
        }
    }
}

impl StegConfig {
    pub fn validate(&self, token_bits: usize) -> Result<()> {
        if !(self.threshold_t > 0.0) {
            return Err(Error::config(format!(
                "threshold_t must be positive, got {}",
                self.threshold_t
            )));
        }
        if self.lambda_bits == 0 {
            return Err(Error::config("lambda_bits must be positive"));
        }
        if let Some(m) = self.scored_bits_per_token {
            if m == 0 || m > token_bits {
                return Err(Error::config(format!(
                    "scored_bits_per_token must be in 1..={token_bits}, got {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn stop_rule(&self) -> StopRule {
        match (self.max_payload_bits, self.framed) {
            (Some(n), _) => StopRule::AtLength(n),
            (None, true) => StopRule::Framed,
            (None, false) => StopRule::Never,
        }
    }

    pub fn verify_cap(&self) -> usize {
        VERIFY_CAP_PER_LAMBDA * self.lambda_bits
    }

    fn scores_bit(&self, bit_in_token: usize) -> bool {
        self.scored_bits_per_token.is_none_or(|m| bit_in_token < m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// When the receiver stops appending code symbols. Depends only on the
/// decoded bits so both sides agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    Never,
    AtLength(usize),
    Framed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieval {
    pub decoded: Vec<bool>,
    pub code: Vec<CodeSymbol>,
    /// Length of the verified prefix `r` (full scheme only).
    pub prefix_len: Option<usize>,
}

/// Everything a scheme needs to produce one response.
pub struct EmbedContext<'a> {
    pub prf: &'a dyn UnitPrf,
    pub model: &'a mut dyn Model,
    pub model_digest: String,
    pub prompt: &'a Prompt,
    /// True randomness for the entropy-collecting prefix.
    pub rng: &'a mut dyn rand::RngCore,
    pub options: GenerateOptions,
}

pub trait Scheme: Send + Sync {
    fn name(&self) -> &'static str;

    fn generate(
        &self,
        ctx: EmbedContext<'_>,
        payload: &[bool],
        config: &StegConfig,
    ) -> Result<Transcript>;

    /// `None` means no payload-carrying region was found.
    fn retrieve(
        &self,
        prf: &dyn UnitPrf,
        bits: &[bool],
        token_bits: usize,
        config: &StegConfig,
    ) -> Option<Retrieval>;
}

/// Sender state for the payload phase: keyed sampling on `next` plus the
/// emulated receiver that supplies feedback.
pub(crate) struct PayloadEmbedder<'a> {
    bound: Box<dyn BoundPrf + 'a>,
    ecc: EccState,
    channel: ChunkReceiver,
    config: StegConfig,
}

impl<'a> PayloadEmbedder<'a> {
    pub fn new(bound: Box<dyn BoundPrf + 'a>, payload: &[bool], config: &StegConfig) -> Self {
        PayloadEmbedder {
            bound,
            ecc: EccState::new(payload.to_vec()),
            channel: ChunkReceiver::new(config.threshold_t, config.stop_rule()),
            config: config.clone(),
        }
    }

    /// Symbol keying the sample; `None` once the payload is delivered, the
    /// receiver stopped, or the bit is outside the scored part of a token.
    pub fn keyed_symbol(&self, step: &BitStep) -> Option<CodeSymbol> {
        if self.config.scores_bit(step.bit_in_token) && self.channel.is_active() {
            self.ecc.next_symbol()
        } else {
            None
        }
    }

    pub fn sampling_value(&self, step: &BitStep) -> f64 {
        self.bound.eval(step.index, self.keyed_symbol(step))
    }

    pub fn observe(&mut self, step: &BitStep, bit: bool) {
        if !self.config.scores_bit(step.bit_in_token) {
            return;
        }
        if let Some(symbol) = self.channel.observe(&*self.bound, step.index, bit) {
            self.ecc.deliver(symbol);
        }
    }

    pub fn code(&self) -> &[CodeSymbol] {
        self.channel.code()
    }
}

/// Runs the receiver over `bits[start..]`; bit `p` (0-based) has PRF index
/// `p + 1` and position `p % token_bits` within its token.
pub fn replay_channel(
    bound: &dyn BoundPrf,
    bits: &[bool],
    start: usize,
    token_bits: usize,
    config: &StegConfig,
) -> ChunkReceiver {
    let mut channel = ChunkReceiver::new(config.threshold_t, config.stop_rule());
    for (p, &bit) in bits.iter().enumerate().skip(start) {
        if !channel.is_active() {
            break;
        }
        if config.scores_bit(p % token_bits.max(1)) {
            channel.observe(bound, p as u64 + 1, bit);
        }
    }
    channel
}

/// Named scheme lookup.
#[derive(Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Arc<dyn Scheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        SchemeRegistry {
            schemes: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(OneQueryScheme));
        reg.register(Arc::new(FullScheme));
        reg
    }

    pub fn register(&mut self, scheme: Arc<dyn Scheme>) {
        self.schemes.insert(scheme.name(), scheme);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.schemes.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scheme>> {
        self.schemes.get(name).cloned().ok_or_else(|| {
            Error::config(format!(
                "unknown scheme {name:?} (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
