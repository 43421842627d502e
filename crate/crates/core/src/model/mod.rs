//! Token-generating models and the binary view of their output.

mod registry;
pub mod reduction;
pub mod remote;
pub mod replay;
pub mod toy;
pub mod wire;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use reduction::{
    bit_conditional, bits_to_tokens, empirical_entropy, sample_bit, token_width, tokens_to_bits,
    EntropyLedger,
};
pub use registry::{ModelFactory, ModelRegistry};

pub type TokenId = u32;

/// Tolerance on the total mass of a reported distribution.
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::protocol("empty distribution"));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::protocol(format!("invalid probability {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::protocol(format!("probabilities sum to {sum}")));
        }
        Ok(TokenDistribution { probs })
    }

    pub fn uniform(vocab_size: usize) -> Self {
        TokenDistribution {
            probs: vec![1.0 / vocab_size as f64; vocab_size],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    /// Index of the most likely token (lowest id on ties).
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitDistribution {
    p_one: f64,
}

impl BitDistribution {
    pub fn new(p_one: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&p_one),
            "bit probability {p_one} outside [0, 1]"
        );
        BitDistribution { p_one }
    }

    pub fn p_one(self) -> f64 {
        self.p_one
    }

    pub fn branch(self, bit: bool) -> f64 {
        if bit {
            self.p_one
        } else {
            1.0 - self.p_one
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<TokenId>,
}

impl Prompt {
    pub fn text(text: impl Into<String>) -> Self {
        Prompt {
            text: text.into(),
            tokens: vec![],
        }
    }

    pub fn tokens(tokens: Vec<TokenId>) -> Self {
        Prompt {
            text: String::new(),
            tokens,
        }
    }
}

/// A deterministic map from context to next-token distribution.
pub trait Model: Send {
    fn kind(&self) -> &str;

    fn vocab_size(&self) -> usize;

    /// Token that ends a response once emitted.
    fn done_token(&self) -> Option<TokenId>;

    /// Response length cap in tokens.
    fn max_len(&self) -> Option<usize>;

    fn next_token_dist(&mut self, prompt: &Prompt, generated: &[TokenId])
        -> Result<TokenDistribution>;

    fn detokenize(&mut self, _tokens: &[TokenId]) -> Result<Option<String>> {
        Ok(None)
    }

    fn tokenize(&mut self, _text: &str) -> Result<Option<Vec<TokenId>>> {
        Ok(None)
    }

    /// Drops any per-session memoization.
    fn reset_session(&mut self) {}

    fn token_width(&self) -> usize {
        token_width(self.vocab_size())
    }
}

/// `{"type", "params", "vocab_size", "done_token", "max_len"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub vocab_size: Option<usize>,
    #[serde(default)]
    pub done_token: Option<TokenId>,
    #[serde(default)]
    pub max_len: Option<usize>,
}

impl ModelConfig {
    pub fn new(kind: impl Into<String>, params: serde_json::Value) -> Self {
        ModelConfig {
            kind: kind.into(),
            params,
            vocab_size: None,
            done_token: None,
            max_len: None,
        }
    }

    pub fn coin(p: f64, max_len: usize) -> Self {
        ModelConfig {
            vocab_size: Some(2),
            max_len: Some(max_len),
            ..Self::new("coin", serde_json::json!({ "p": p }))
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = Some(max_len);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("model config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub(crate) fn param<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        match self.params.get(name) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Error::config(format!("model param {name:?}: {e}"))),
        }
    }

    pub(crate) fn require<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        self.param(name)?
            .ok_or_else(|| Error::config(format!("{} model requires param {name:?}", self.kind)))
    }
}
