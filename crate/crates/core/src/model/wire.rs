//! JSON frames exchanged with a model server, over HTTP or stdio JSON lines.
//!
//! HTTP: `POST /v1/distribution`, `POST /v1/encode`, `POST /v1/decode`,
//! `GET /v1/info`. In stdio mode each request line carries an extra `"op"`
//! field (`distribution`, `encode`, `decode`, `info`) and each response is
//! one line.

use serde::{Deserialize, Serialize};

use super::{TokenDistribution, TokenId, DISTRIBUTION_SUM_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRequest {
    pub prompt: String,
    pub tokens: Vec<TokenId>,
    pub model_name: String,
}

/// Dense `{probs, vocab_size, done_token}` or sparse
/// `{indices, probs, residual_uniform: false, vocab_size, done_token}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionResponse {
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<TokenId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_uniform: Option<bool>,
    pub vocab_size: usize,
    #[serde(default)]
    pub done_token: Option<TokenId>,
}

impl DistributionResponse {
    pub fn into_distribution(self) -> Result<TokenDistribution> {
        let probs = match self.indices {
            None => {
                if self.probs.len() != self.vocab_size {
                    return Err(Error::protocol(format!(
                        "{} probabilities for vocab_size {}",
                        self.probs.len(),
                        self.vocab_size
                    )));
                }
                self.probs
            }
            Some(indices) => {
                if self.residual_uniform == Some(true) {
                    return Err(Error::protocol("residual_uniform sparse frames are not supported"));
                }
                if indices.len() != self.probs.len() {
                    return Err(Error::protocol("sparse frame: indices and probs differ in length"));
                }
                let mut dense = vec![0.0; self.vocab_size];
                for (&i, &p) in indices.iter().zip(&self.probs) {
                    let slot = dense
                        .get_mut(i as usize)
                        .ok_or_else(|| Error::protocol(format!("sparse index {i} out of range")))?;
                    *slot = p;
                }
                dense
            }
        };
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::protocol(format!("server probabilities sum to {sum}")));
        }
        TokenDistribution::new(probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub model_name: String,
    pub vocab_size: usize,
    #[serde(default)]
    pub done_token: Option<TokenId>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub error: ErrorBody,
}

/// Reads either the expected frame or an error frame from a JSON value.
pub fn parse_frame<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    if value.get("error").is_some() {
        let frame: ErrorFrame = serde_json::from_value(value)
            .map_err(|e| Error::protocol(format!("malformed error frame: {e}")))?;
        return Err(match frame.error.code {
            404 | 503 => Error::ModelUnavailable(frame.error.message),
            _ => Error::protocol(format!("server error {}: {}", frame.error.code, frame.error.message)),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::protocol(format!("malformed frame: {e}")))
}
