use crate::error::{Error, Result};
use crate::generate::{run, BitPolicy, BitStep, Phase, Transcript};
use crate::prf::{BoundPrf, UnitPrf};
use crate::watermark::{bit_score, EntropyCollector, Score};

use super::{replay_channel, EmbedContext, PayloadEmbedder, Retrieval, Scheme, StegConfig};

/// Entropy prefix, then a plain watermark marking `r`, then the payload.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullScheme;

enum Stage<'a> {
    Entropy,
    Mark {
        bound: Box<dyn BoundPrf + 'a>,
        score: Score,
    },
    Payload(PayloadEmbedder<'a>),
    /// Placeholder while moving between stages.
    Switching,
}

struct FullPolicy<'a, 'r> {
    prf: &'a dyn UnitPrf,
    payload: &'a [bool],
    config: &'a StegConfig,
    collector: EntropyCollector<'r>,
    stage: Stage<'a>,
    prefix_len: Option<usize>,
    payload_start: Option<usize>,
}

impl BitPolicy for FullPolicy<'_, '_> {
    fn phase(&self) -> Phase {
        match self.stage {
            Stage::Entropy => Phase::Entropy,
            Stage::Mark { .. } => Phase::Mark,
            Stage::Payload(_) | Stage::Switching => Phase::Payload,
        }
    }

    fn sampling_value(&mut self, step: &BitStep) -> f64 {
        match &self.stage {
            Stage::Entropy => self.collector.sample(),
            Stage::Mark { bound, .. } => bound.eval(step.index, None),
            Stage::Payload(embedder) => embedder.sampling_value(step),
            Stage::Switching => unreachable!("stage switch left incomplete"),
        }
    }

    fn observe(&mut self, step: &BitStep, bit: bool, entropy: f64) {
        match &mut self.stage {
            Stage::Entropy => {
                if let Some(r) = self.collector.observe(bit, entropy) {
                    self.prefix_len = Some(r.len());
                    self.stage = Stage::Mark {
                        bound: self.prf.bind(&r),
                        score: Score::default(),
                    };
                }
            }
            Stage::Mark { bound, score } => {
                score.add(bit_score(bit, bound.eval(step.index, None)));
                if score.exceeds(self.config.lambda_bits as f64) {
                    let Stage::Mark { bound, .. } = std::mem::replace(&mut self.stage, Stage::Switching)
                    else {
                        unreachable!()
                    };
                    self.payload_start = Some(step.index as usize);
                    self.stage =
                        Stage::Payload(PayloadEmbedder::new(bound, self.payload, self.config));
                }
            }
            Stage::Payload(embedder) => embedder.observe(step, bit),
            Stage::Switching => unreachable!("stage switch left incomplete"),
        }
    }
}

impl Scheme for FullScheme {
    fn name(&self) -> &'static str {
        "full"
    }

    fn generate(
        &self,
        ctx: EmbedContext<'_>,
        payload: &[bool],
        config: &StegConfig,
    ) -> Result<Transcript> {
        if payload.is_empty() {
            return Err(Error::InvalidInput("payload is empty".into()));
        }
        config.validate(ctx.model.token_width())?;
        let mut policy = FullPolicy {
            prf: ctx.prf,
            payload,
            config,
            collector: EntropyCollector::new(ctx.rng, config.lambda_bits),
            stage: Stage::Entropy,
            prefix_len: None,
            payload_start: None,
        };
        let raw = run(ctx.model, ctx.prompt, &mut policy, &ctx.options)?;
        let mut transcript = raw.into_transcript(self.name(), ctx.model_digest);
        transcript.phase_boundary = policy.prefix_len;
        transcript.payload_start = policy.payload_start;
        transcript.low_entropy = policy.payload_start.is_none();
        transcript.code = Some(match &policy.stage {
            Stage::Payload(embedder) => embedder.code().to_vec(),
            _ => vec![],
        });
        Ok(transcript)
    }

    /// Tries each prefix `bits[..j]` as `r`. A candidate is verified when
    /// its watermark score clears `lambda * sqrt(len)` within the cap; the
    /// first verified candidate whose payload region yields a non-empty
    /// code wins.
    fn retrieve(
        &self,
        prf: &dyn UnitPrf,
        bits: &[bool],
        token_bits: usize,
        config: &StegConfig,
    ) -> Option<Retrieval> {
        let lambda = config.lambda_bits as f64;
        let cap = config.verify_cap() as u64;
        'candidates: for j in 1..=bits.len() {
            let bound = prf.bind(&bits[..j]);
            let mut score = Score::default();
            let mut pos = j;
            while !score.exceeds(lambda) {
                if pos >= bits.len() || score.length >= cap {
                    continue 'candidates;
                }
                score.add(bit_score(bits[pos], bound.eval(pos as u64 + 1, None)));
                pos += 1;
            }
            let channel = replay_channel(&*bound, bits, pos, token_bits, config);
            if !channel.code().is_empty() {
                return Some(Retrieval {
                    decoded: channel.decoded().to_vec(),
                    code: channel.code().to_vec(),
                    prefix_len: Some(j),
                });
            }
        }
        None
    }
}
