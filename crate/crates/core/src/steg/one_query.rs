use crate::error::{Error, Result};
use crate::generate::{run, BitPolicy, BitStep, Phase, Transcript};
use crate::prf::UnitPrf;

use super::{replay_channel, EmbedContext, PayloadEmbedder, Retrieval, Scheme, StegConfig};

/// Keyed on `F_k(i, next)` from the first bit; no entropy prefix.
#[derive(Debug, Clone, Copy, Default)]
pub struct OneQueryScheme;

struct OneQueryPolicy<'a> {
    embedder: PayloadEmbedder<'a>,
}

impl BitPolicy for OneQueryPolicy<'_> {
    fn phase(&self) -> Phase {
        Phase::Payload
    }

    fn sampling_value(&mut self, step: &BitStep) -> f64 {
        self.embedder.sampling_value(step)
    }

    fn observe(&mut self, step: &BitStep, bit: bool, _: f64) {
        self.embedder.observe(step, bit);
    }
}

impl Scheme for OneQueryScheme {
    fn name(&self) -> &'static str {
        "one-query"
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
        let mut policy = OneQueryPolicy {
            embedder: PayloadEmbedder::new(ctx.prf.bind(&[]), payload, config),
        };
        let raw = run(ctx.model, ctx.prompt, &mut policy, &ctx.options)?;
        let mut transcript = raw.into_transcript(self.name(), ctx.model_digest);
        transcript.payload_start = Some(0);
        transcript.code = Some(policy.embedder.code().to_vec());
        Ok(transcript)
    }

    fn retrieve(
        &self,
        prf: &dyn UnitPrf,
        bits: &[bool],
        token_bits: usize,
        config: &StegConfig,
    ) -> Option<Retrieval> {
        let bound = prf.bind(&[]);
        let channel = replay_channel(&*bound, bits, 0, token_bits, config);
        Some(Retrieval {
            decoded: channel.decoded().to_vec(),
            code: channel.code().to_vec(),
            prefix_len: None,
        })
    }
}
