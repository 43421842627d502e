//! Bit-by-bit generation driver and the transcript it produces.

use serde::{Deserialize, Serialize};

use crate::ecc::CodeSymbol;
use crate::error::{Error, Result};
use crate::model::{
    bit_conditional, sample_bit, tokens_to_bits, EntropyLedger, Model, Prompt, TokenId,
};

/// Smallest value a unit sample may take before it reaches a comparison or
/// a logarithm.
pub const UNIT_FLOOR: f64 = 1.0 / 18_446_744_073_709_551_616.0;
/// Largest `f64` strictly below one.
pub const UNIT_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(UNIT_FLOOR, UNIT_CEIL)
}

/// Draws a true-random unit value with the same 64-bit granularity as the PRF.
pub fn random_unit(rng: &mut dyn rand::RngCore) -> f64 {
    rng.next_u64() as f64 / 18_446_744_073_709_551_616.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Sampling with true randomness while collecting entropy.
    Entropy,
    /// Plain keyed watermark.
    Mark,
    /// Keyed sampling that carries payload symbols.
    Payload,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitStep {
    /// 1-based position of the bit in the response.
    pub index: u64,
    pub bit_in_token: usize,
    pub p_one: f64,
}

/// Decides each bit of a response. The driver sets the bit to
/// `1[sampling_value <= p_one]`, so any policy whose sampling values are
/// uniform reproduces the model's distribution.
pub trait BitPolicy {
    fn phase(&self) -> Phase;
    fn sampling_value(&mut self, step: &BitStep) -> f64;
    fn observe(&mut self, step: &BitStep, bit: bool, entropy: f64);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Additional cap on response length in tokens.
    pub max_tokens: Option<usize>,
    /// Keep PRF values and code symbols in the transcript (leaks key material).
    pub debug: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitRecord {
    pub p_one: f64,
    pub entropy: f64,
    pub phase: Phase,
    /// The unit value that decided this bit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub scheme: String,
    pub tokens: Vec<TokenId>,
    pub token_bits: usize,
    pub bits: Vec<bool>,
    /// Length of the true-randomness prefix `r`, once entropy reached lambda.
    pub phase_boundary: Option<usize>,
    /// Number of bits generated before payload symbols started.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_start: Option<usize>,
    pub per_bit: Vec<BitRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<Vec<CodeSymbol>>,
    pub low_entropy: bool,
    pub model_config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Transcript {
    pub fn ledger(&self) -> EntropyLedger {
        EntropyLedger::from_entries(self.per_bit.iter().map(|r| r.entropy))
    }

    /// Strips key-dependent fields before the transcript leaves the process.
    pub fn redacted(&self) -> Transcript {
        let mut out = self.clone();
        for r in &mut out.per_bit {
            r.prf_value = None;
        }
        out.code = None;
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// What the driver produced, before a scheme adds its own fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub tokens: Vec<TokenId>,
    pub token_bits: usize,
    pub bits: Vec<bool>,
    pub per_bit: Vec<BitRecord>,
}

impl RawResponse {
    pub fn into_transcript(self, scheme: &str, digest: String) -> Transcript {
        Transcript {
            scheme: scheme.to_string(),
            tokens: self.tokens,
            token_bits: self.token_bits,
            bits: self.bits,
            phase_boundary: None,
            payload_start: None,
            per_bit: self.per_bit,
            code: None,
            low_entropy: false,
            model_config_digest: digest,
            text: None,
        }
    }
}

/// Generates tokens until the done token or the length cap, one bit at a
/// time through the binary reduction.
pub fn run(
    model: &mut dyn Model,
    prompt: &Prompt,
    policy: &mut dyn BitPolicy,
    options: &GenerateOptions,
) -> Result<RawResponse> {
    let cap = match (model.max_len(), options.max_tokens) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    if cap.is_none() && model.done_token().is_none() {
        return Err(Error::config(
            "model has neither a done token nor a length cap",
        ));
    }
    let vocab = model.vocab_size();
    let width = model.token_width();
    let mut tokens: Vec<TokenId> = vec![];
    let mut bits = vec![];
    let mut per_bit = vec![];
    while cap.is_none_or(|c| tokens.len() < c) {
        let dist = model.next_token_dist(prompt, &tokens)?;
        if dist.vocab_size() != vocab {
            return Err(Error::protocol(format!(
                "model returned {} probabilities for vocabulary of {vocab}",
                dist.vocab_size()
            )));
        }
        let mut token_bits = Vec::with_capacity(width);
        for bit_in_token in 0..width {
            let cond = bit_conditional(&dist, &token_bits)?;
            let step = BitStep {
                index: bits.len() as u64 + 1,
                bit_in_token,
                p_one: cond.p_one(),
            };
            let phase = policy.phase();
            let u = clamp_unit(policy.sampling_value(&step));
            let (bit, entropy) = sample_bit(cond, u)?;
            policy.observe(&step, bit, entropy);
            token_bits.push(bit);
            bits.push(bit);
            per_bit.push(BitRecord {
                p_one: cond.p_one(),
                entropy,
                phase,
                prf_value: options.debug.then_some(u),
            });
        }
        let token = token_bits
            .iter()
            .fold(0 as TokenId, |acc, &b| (acc << 1) | b as TokenId);
        tokens.push(token);
        if model.done_token() == Some(token) {
            break;
        }
    }
    debug_assert_eq!(tokens_to_bits(&tokens, width).ok().as_deref(), Some(&bits[..]));
    Ok(RawResponse {
        tokens,
        token_bits: width,
        bits,
        per_bit,
    })
}

/// Plain sampling: every bit decided by a fresh true-random value.
pub struct DirectSampler<'a> {
    pub rng: &'a mut dyn rand::RngCore,
}

impl BitPolicy for DirectSampler<'_> {
    fn phase(&self) -> Phase {
        Phase::Entropy
    }

    fn sampling_value(&mut self, _: &BitStep) -> f64 {
        random_unit(self.rng)
    }

    fn observe(&mut self, _: &BitStep, _: bool, _: f64) {}
}

/// Replays a fixed list of unit values, one per bit.
pub struct ReplayedUniforms<'a> {
    pub values: &'a [f64],
}

impl BitPolicy for ReplayedUniforms<'_> {
    fn phase(&self) -> Phase {
        Phase::Entropy
    }

    fn sampling_value(&mut self, step: &BitStep) -> f64 {
        self.values[(step.index - 1) as usize]
    }

    fn observe(&mut self, _: &BitStep, _: bool, _: f64) {}
}

pub fn sample_plain(
    model: &mut dyn Model,
    prompt: &Prompt,
    rng: &mut dyn rand::RngCore,
    options: &GenerateOptions,
) -> Result<RawResponse> {
    run(model, prompt, &mut DirectSampler { rng }, options)
}
