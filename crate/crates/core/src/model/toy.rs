//! Small context-free and Markov models for tests and simulations.

use super::{Model, ModelConfig, Prompt, TokenDistribution, TokenId};
use crate::error::{Error, Result};

/// Binary model emitting 1 with probability `p`, regardless of context.
#[derive(Debug, Clone)]
pub struct CoinModel {
    dist: TokenDistribution,
    done_token: Option<TokenId>,
    max_len: Option<usize>,
}

impl CoinModel {
    pub fn new(p: f64, max_len: Option<usize>) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("coin probability {p} outside [0, 1]")));
        }
        Ok(CoinModel {
            dist: TokenDistribution::new(vec![1.0 - p, p])?,
            done_token: None,
            max_len,
        })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        if cfg.vocab_size.is_some_and(|v| v != 2) {
            return Err(Error::config("coin model has vocab_size 2"));
        }
        let mut model = Self::new(cfg.require("p")?, cfg.max_len)?;
        model.done_token = cfg.done_token;
        Ok(model)
    }
}

impl Model for CoinModel {
    fn kind(&self) -> &str {
        "coin"
    }

    fn vocab_size(&self) -> usize {
        2
    }

    fn done_token(&self) -> Option<TokenId> {
        self.done_token
    }

    fn max_len(&self) -> Option<usize> {
        self.max_len
    }

    fn next_token_dist(&mut self, _: &Prompt, _: &[TokenId]) -> Result<TokenDistribution> {
        Ok(self.dist.clone())
    }
}

#[derive(Debug, Clone)]
pub struct UniformModel {
    vocab_size: usize,
    done_token: Option<TokenId>,
    max_len: Option<usize>,
}

impl UniformModel {
    pub fn new(vocab_size: usize, max_len: Option<usize>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::config("uniform model needs vocab_size >= 1"));
        }
        Ok(UniformModel {
            vocab_size,
            done_token: None,
            max_len,
        })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let vocab = cfg
            .vocab_size
            .ok_or_else(|| Error::config("uniform model requires vocab_size"))?;
        let mut model = Self::new(vocab, cfg.max_len)?;
        model.done_token = check_done(cfg.done_token, vocab)?;
        Ok(model)
    }
}

impl Model for UniformModel {
    fn kind(&self) -> &str {
        "uniform"
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn done_token(&self) -> Option<TokenId> {
        self.done_token
    }

    fn max_len(&self) -> Option<usize> {
        self.max_len
    }

    fn next_token_dist(&mut self, _: &Prompt, _: &[TokenId]) -> Result<TokenDistribution> {
        Ok(TokenDistribution::uniform(self.vocab_size))
    }
}

/// First-order Markov chain: the next distribution is the transition row of
/// the most recent token (prompt tokens included), or `initial` when there
/// is no context.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    initial: TokenDistribution,
    transitions: Vec<TokenDistribution>,
    done_token: Option<TokenId>,
    max_len: Option<usize>,
}

impl MarkovModel {
    pub fn new(
        initial: Option<Vec<f64>>,
        transitions: Vec<Vec<f64>>,
        max_len: Option<usize>,
    ) -> Result<Self> {
        let n = transitions.len();
        if n == 0 {
            return Err(Error::config("markov model needs at least one state"));
        }
        let transitions = transitions
            .into_iter()
            .map(|row| {
                if row.len() != n {
                    return Err(Error::config("markov transition matrix must be square"));
                }
                TokenDistribution::new(row).map_err(|e| Error::config(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = match initial {
            Some(row) if row.len() != n => {
                return Err(Error::config("markov initial row has wrong length"))
            }
            Some(row) => TokenDistribution::new(row).map_err(|e| Error::config(e.to_string()))?,
            None => TokenDistribution::uniform(n),
        };
        Ok(MarkovModel {
            initial,
            transitions,
            done_token: None,
            max_len,
        })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let mut model = Self::new(cfg.param("initial")?, cfg.require("transitions")?, cfg.max_len)?;
        if cfg.vocab_size.is_some_and(|v| v != model.transitions.len()) {
            return Err(Error::config("vocab_size disagrees with transition matrix"));
        }
        model.done_token = check_done(cfg.done_token, model.transitions.len())?;
        Ok(model)
    }
}

impl Model for MarkovModel {
    fn kind(&self) -> &str {
        "markov"
    }

    fn vocab_size(&self) -> usize {
        self.transitions.len()
    }

    fn done_token(&self) -> Option<TokenId> {
        self.done_token
    }

    fn max_len(&self) -> Option<usize> {
        self.max_len
    }

    fn next_token_dist(
        &mut self,
        prompt: &Prompt,
        generated: &[TokenId],
    ) -> Result<TokenDistribution> {
        match generated.last().or(prompt.tokens.last()) {
            None => Ok(self.initial.clone()),
            Some(&t) => self
                .transitions
                .get(t as usize)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("token {t} outside vocabulary"))),
        }
    }
}

fn check_done(done: Option<TokenId>, vocab: usize) -> Result<Option<TokenId>> {
    match done {
        Some(t) if t as usize >= vocab => Err(Error::config(format!(
            "done_token {t} outside vocabulary of {vocab}"
        ))),
        other => Ok(other),
    }
}
