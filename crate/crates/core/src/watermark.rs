//! Single-bit keyed watermark: entropy-collecting prefix, keyed sampling,
//! and score-threshold detection.
//!
//! For a bit `x` and keyed value `v`, the score is `ln(1/v)` when `x = 1`
//! and `ln(1/(1-v))` when `x = 0`. Key-independent text scores an Exp(1)
//! variable per bit; keyed sampling adds the bit's Shannon entropy times
//! `ln 2` in expectation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generate::{
    clamp_unit, random_unit, run, BitPolicy, BitStep, GenerateOptions, Phase, Transcript,
};
use crate::model::{Model, Prompt};
use crate::prf::{BoundPrf, UnitPrf};

pub const SCHEME_NAME: &str = "watermark";

/// Score of one bit against its keyed value, in nats.
pub fn bit_score(bit: bool, prf_value: f64) -> f64 {
    let v = clamp_unit(prf_value);
    if bit {
        -v.ln()
    } else {
        -(1.0 - v).ln()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub total: f64,
    pub length: u64,
}

impl Score {
    pub fn add(&mut self, s: f64) {
        self.total += s;
        self.length += 1;
    }

    /// `total - length`: zero in expectation for unrelated text.
    pub fn surplus(&self) -> f64 {
        self.total - self.length as f64
    }

    pub fn normalized(&self) -> Option<f64> {
        (self.length > 0).then(|| self.surplus() / (self.length as f64).sqrt())
    }

    /// `surplus > lambda * sqrt(length)`.
    pub fn exceeds(&self, lambda: f64) -> bool {
        self.surplus() > lambda * (self.length as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkVerdict {
    pub detected: bool,
    /// Length of the prefix `r` under which the watermark was found.
    pub split_index: Option<usize>,
}

impl WatermarkVerdict {
    pub const CLEAN: WatermarkVerdict = WatermarkVerdict {
        detected: false,
        split_index: None,
    };
}

/// Samples with true randomness while summing empirical entropy; yields the
/// prefix `r` at the first bit where the sum reaches `lambda`.
pub(crate) struct EntropyCollector<'r> {
    pub rng: &'r mut dyn rand::RngCore,
    lambda: f64,
    total: f64,
    bits: Vec<bool>,
}

impl<'r> EntropyCollector<'r> {
    pub fn new(rng: &'r mut dyn rand::RngCore, lambda_bits: usize) -> Self {
        EntropyCollector {
            rng,
            lambda: lambda_bits as f64,
            total: 0.0,
            bits: vec![],
        }
    }

    pub fn sample(&mut self) -> f64 {
        random_unit(self.rng)
    }

    /// Returns the completed prefix when this bit pushes entropy to `lambda`.
    pub fn observe(&mut self, bit: bool, entropy: f64) -> Option<Vec<bool>> {
        self.bits.push(bit);
        self.total += entropy;
        (self.total >= self.lambda).then(|| self.bits.clone())
    }
}

struct WatermarkPolicy<'a, 'r> {
    prf: &'a dyn UnitPrf,
    collector: EntropyCollector<'r>,
    prefix: Option<(usize, Box<dyn BoundPrf + 'a>)>,
}

impl BitPolicy for WatermarkPolicy<'_, '_> {
    fn phase(&self) -> Phase {
        if self.prefix.is_some() {
            Phase::Mark
        } else {
            Phase::Entropy
        }
    }

    fn sampling_value(&mut self, step: &BitStep) -> f64 {
        match &self.prefix {
            Some((_, bound)) => bound.eval(step.index, None),
            None => self.collector.sample(),
        }
    }

    fn observe(&mut self, _: &BitStep, bit: bool, entropy: f64) {
        if self.prefix.is_none() {
            if let Some(r) = self.collector.observe(bit, entropy) {
                self.prefix = Some((r.len(), self.prf.bind(&r)));
            }
        }
    }
}

/// Generates a watermarked response. Responses that end before collecting
/// `lambda_bits` of entropy come back unwatermarked with `low_entropy` set.
pub fn wat_generate(
    prf: &dyn UnitPrf,
    model: &mut dyn Model,
    model_digest: String,
    prompt: &Prompt,
    lambda_bits: usize,
    rng: &mut dyn rand::RngCore,
    options: &GenerateOptions,
) -> Result<Transcript> {
    let mut policy = WatermarkPolicy {
        prf,
        collector: EntropyCollector::new(rng, lambda_bits),
        prefix: None,
    };
    let raw = run(model, prompt, &mut policy, options)?;
    let boundary = policy.prefix.as_ref().map(|(len, _)| *len);
    let mut transcript = raw.into_transcript(SCHEME_NAME, model_digest);
    transcript.phase_boundary = boundary;
    transcript.payload_start = boundary;
    transcript.low_entropy = boundary.is_none();
    Ok(transcript)
}

/// Score of `bits[split..]` under prefix `bits[..split]`.
pub fn split_score(prf: &dyn UnitPrf, bits: &[bool], split: usize) -> Score {
    let bound = prf.bind(&bits[..split]);
    let mut score = Score::default();
    for (offset, &bit) in bits[split..].iter().enumerate() {
        let index = (split + offset + 1) as u64;
        score.add(bit_score(bit, bound.eval(index, None)));
    }
    score
}

/// Tries every split `1 <= i < L` as the prefix `r` and reports the first
/// whose suffix score exceeds `(L - i) + lambda * sqrt(L - i)`.
pub fn wat_detect(prf: &dyn UnitPrf, bits: &[bool], lambda_bits: usize) -> WatermarkVerdict {
    let lambda = lambda_bits as f64;
    (1..bits.len())
        .find(|&i| split_score(prf, bits, i).exceeds(lambda))
        .map_or(WatermarkVerdict::CLEAN, |i| WatermarkVerdict {
            detected: true,
            split_index: Some(i),
        })
}
