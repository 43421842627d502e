//! Binary reduction of a token distribution and empirical-entropy accounting.
//!
//! Token ids are written as fixed-width big-endian bit strings. Sampling a
//! token then becomes sampling its bits one at a time from conditional
//! probabilities; the product of the conditionals is the token's
//! probability. Bit patterns at or above the vocabulary size carry no mass.

use serde::{Deserialize, Serialize};

use super::{BitDistribution, TokenDistribution, TokenId};
use crate::ecc::bits_to_string;
use crate::error::{Error, Result};

/// Bits needed to address `vocab_size` tokens: `ceil(log2 |T|)`, at least 1.
pub fn token_width(vocab_size: usize) -> usize {
    assert!(vocab_size > 0, "vocabulary must be non-empty");
    (usize::BITS - (vocab_size - 1).leading_zeros()).max(1) as usize
}

/// Mass of the token-id range whose `width`-bit encoding starts with `prefix`.
fn prefix_mass(probs: &[f64], width: usize, prefix: &[bool]) -> f64 {
    let depth = prefix.len();
    let head = prefix.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let span = 1usize << (width - depth);
    let start = head * span;
    let end = (start + span).min(probs.len());
    if start >= end {
        return 0.0;
    }
    probs[start..end].iter().sum()
}

/// Probability that the next bit is 1 given the bits of the current token
/// emitted so far.
pub fn bit_conditional(dist: &TokenDistribution, bit_prefix: &[bool]) -> Result<BitDistribution> {
    let width = token_width(dist.vocab_size());
    if bit_prefix.len() >= width {
        return Err(Error::InvalidPrefix(format!(
            "{} (token width is {width})",
            bits_to_string(bit_prefix)
        )));
    }
    let mut extended = bit_prefix.to_vec();
    extended.push(false);
    let zero = prefix_mass(dist.probs(), width, &extended);
    *extended.last_mut().unwrap() = true;
    let one = prefix_mass(dist.probs(), width, &extended);
    let total = zero + one;
    if total <= 0.0 {
        return Err(Error::InvalidPrefix(bits_to_string(bit_prefix)));
    }
    Ok(BitDistribution::new(one / total))
}

/// Bit 1 iff `rng_value <= p_one`; the entropy is `-log2` of the chosen
/// branch probability, in bits.
pub fn sample_bit(dist: BitDistribution, rng_value: f64) -> Result<(bool, f64)> {
    let bit = rng_value <= dist.p_one();
    let p = dist.branch(bit);
    if p <= 0.0 {
        return Err(Error::ImpossibleSample);
    }
    Ok((bit, empirical_entropy(p)))
}

/// `-log2 p`, with exact zero for certain events.
pub fn empirical_entropy(p: f64) -> f64 {
    if p >= 1.0 {
        0.0
    } else {
        -p.log2()
    }
}

pub fn tokens_to_bits(tokens: &[TokenId], width: usize) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(tokens.len() * width);
    for &token in tokens {
        if width < 32 && token >> width != 0 {
            return Err(Error::Encoding(format!(
                "token id {token} does not fit in {width} bits"
            )));
        }
        bits.extend((0..width).rev().map(|shift| (token >> shift) & 1 == 1));
    }
    Ok(bits)
}

pub fn bits_to_tokens(bits: &[bool], width: usize) -> Result<Vec<TokenId>> {
    if width == 0 || bits.len() % width != 0 {
        return Err(Error::Encoding(format!(
            "{} bits is not a whole number of {width}-bit tokens",
            bits.len()
        )));
    }
    Ok(bits
        .chunks(width)
        .map(|chunk| chunk.iter().fold(0, |acc, &b| (acc << 1) | b as TokenId))
        .collect())
}

/// Per-bit empirical entropies and their running sum, in bits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyLedger {
    per_bit: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EntropyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = f64>) -> Self {
        let mut ledger = Self::new();
        for h in entries {
            ledger.push(h);
        }
        ledger
    }

    pub fn push(&mut self, entropy: f64) {
        debug_assert!(entropy >= 0.0);
        let total = self.total() + entropy;
        self.per_bit.push(entropy);
        self.cumulative.push(total);
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn per_bit(&self) -> &[f64] {
        &self.per_bit
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.per_bit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_bit.is_empty()
    }
}
