//! Replay of recorded distribution traces (JSON lines, `{"probs": [...]}`).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Prompt, TokenDistribution, TokenId};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    probs: Vec<f64>,
}

pub fn read_trace(path: &Path) -> Result<Vec<TokenDistribution>> {
    let file = std::fs::File::open(path)?;
    let mut out = vec![];
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TraceLine = serde_json::from_str(&line)?;
        let dist = TokenDistribution::new(entry.probs)
            .map_err(|e| Error::protocol(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(dist);
    }
    Ok(out)
}

pub fn write_trace(path: &Path, dists: &[TokenDistribution]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in dists {
        serde_json::to_writer(&mut file, &TraceLine { probs: d.probs().to_vec() })?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Serves the `n`-th recorded distribution for the `n`-th token.
#[derive(Debug, Clone)]
pub struct ReplayModel {
    trace: Vec<TokenDistribution>,
    done_token: Option<TokenId>,
    max_len: Option<usize>,
}

impl ReplayModel {
    pub fn new(trace: Vec<TokenDistribution>, done_token: Option<TokenId>) -> Result<Self> {
        let vocab = trace
            .first()
            .ok_or_else(|| Error::config("empty replay trace"))?
            .vocab_size();
        if trace.iter().any(|d| d.vocab_size() != vocab) {
            return Err(Error::config("replay trace mixes vocabulary sizes"));
        }
        let max_len = Some(trace.len());
        Ok(ReplayModel {
            trace,
            done_token,
            max_len,
        })
    }

    /// Params: `{"path": "trace.jsonl"}`.
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let path: String = cfg.require("path")?;
        let mut model = Self::new(read_trace(Path::new(&path))?, cfg.done_token)?;
        if cfg.vocab_size.is_some_and(|v| v != model.vocab_size()) {
            return Err(Error::config("vocab_size disagrees with replay trace"));
        }
        if let Some(cap) = cfg.max_len {
            model.max_len = Some(cap.min(model.trace.len()));
        }
        Ok(model)
    }
}

impl Model for ReplayModel {
    fn kind(&self) -> &str {
        "replay"
    }

    fn vocab_size(&self) -> usize {
        self.trace[0].vocab_size()
    }

    fn done_token(&self) -> Option<TokenId> {
        self.done_token
    }

    fn max_len(&self) -> Option<usize> {
        self.max_len
    }

    fn next_token_dist(&mut self, _: &Prompt, generated: &[TokenId]) -> Result<TokenDistribution> {
        self.trace.get(generated.len()).cloned().ok_or_else(|| {
            Error::ModelUnavailable(format!("replay trace exhausted at token {}", generated.len()))
        })
    }
}

/// Wraps a model and keeps every distribution it hands out, in order.
pub struct RecordingModel<M> {
    inner: M,
    recorded: Vec<TokenDistribution>,
}

impl<M: Model> RecordingModel<M> {
    pub fn new(inner: M) -> Self {
        RecordingModel {
            inner,
            recorded: vec![],
        }
    }

    pub fn recorded(&self) -> &[TokenDistribution] {
        &self.recorded
    }

    pub fn into_trace(self) -> Vec<TokenDistribution> {
        self.recorded
    }
}

impl<M: Model> Model for RecordingModel<M> {
    fn kind(&self) -> &str {
        self.inner.kind()
    }

    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn done_token(&self) -> Option<TokenId> {
        self.inner.done_token()
    }

    fn max_len(&self) -> Option<usize> {
        self.inner.max_len()
    }

    fn next_token_dist(
        &mut self,
        prompt: &Prompt,
        generated: &[TokenId],
    ) -> Result<TokenDistribution> {
        let d = self.inner.next_token_dist(prompt, generated)?;
        self.recorded.push(d.clone());
        Ok(d)
    }

    fn detokenize(&mut self, tokens: &[TokenId]) -> Result<Option<String>> {
        self.inner.detokenize(tokens)
    }

    fn tokenize(&mut self, text: &str) -> Result<Option<Vec<TokenId>>> {
        self.inner.tokenize(text)
    }

    fn reset_session(&mut self) {
        self.inner.reset_session()
    }
}
