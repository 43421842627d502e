#![allow(dead_code)]
pub mod oracle;

use std::collections::HashMap;
use std::sync::Mutex;

use lmsteg::ecc::CodeSymbol;
use lmsteg::generate::{GenerateOptions, Transcript};
use lmsteg::model::{Model, ModelConfig, ModelRegistry, Prompt};
use lmsteg::prf::{symbol_byte, BoundPrf, HmacPrf, PrfInput, SecretKey, UnitPrf};
use lmsteg::steg::{EmbedContext, Scheme, StegConfig};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Truly random function: each distinct input gets a fresh uniform drawn
/// from a seeded stream, remembered for repeat queries.
pub struct RandomOracle {
    state: Mutex<(ChaCha20Rng, HashMap<Vec<u8>, f64>)>,
}

impl RandomOracle {
    pub fn new(seed: u64) -> Self {
        RandomOracle {
            state: Mutex::new((ChaCha20Rng::seed_from_u64(seed), HashMap::new())),
        }
    }

    pub fn distinct_queries(&self) -> usize {
        self.state.lock().unwrap().1.len()
    }
}

struct BoundOracle<'a> {
    oracle: &'a RandomOracle,
    prefix: Vec<bool>,
}

impl BoundPrf for BoundOracle<'_> {
    fn eval(&self, index: u64, symbol: Option<CodeSymbol>) -> f64 {
        let key = PrfInput::new(&self.prefix, index, symbol).encode();
        let mut guard = self.oracle.state.lock().unwrap();
        let (rng, table) = &mut *guard;
        *table.entry(key).or_insert_with(|| rng.gen::<f64>())
    }
}

impl UnitPrf for RandomOracle {
    fn bind<'a>(&'a self, prefix: &[bool]) -> Box<dyn BoundPrf + 'a> {
        Box::new(BoundOracle {
            oracle: self,
            prefix: prefix.to_vec(),
        })
    }
}

/// Cheap keyed hash for long Monte Carlo runs. Not a PRF in any
/// cryptographic sense.
pub struct FastPrf {
    key: u64,
}

impl FastPrf {
    pub fn new(key: u64) -> Self {
        FastPrf { key }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct BoundFast(u64);

impl BoundPrf for BoundFast {
    fn eval(&self, index: u64, symbol: Option<CodeSymbol>) -> f64 {
        let h = mix(mix(self.0 ^ index) ^ symbol_byte(symbol) as u64);
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl UnitPrf for FastPrf {
    fn bind<'a>(&'a self, prefix: &[bool]) -> Box<dyn BoundPrf + 'a> {
        let mut h = mix(self.key ^ prefix.len() as u64);
        for chunk in prefix.chunks(64) {
            let word = chunk.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
            h = mix(h ^ word);
        }
        Box::new(BoundFast(h))
    }
}

pub fn hmac_prf(rng: &mut ChaCha20Rng) -> HmacPrf {
    HmacPrf::new(&SecretKey::generate(128, rng).unwrap())
}

pub fn build(cfg: &ModelConfig) -> Box<dyn Model> {
    ModelRegistry::builtin().build(cfg).unwrap()
}

pub fn random_bits(rng: &mut dyn RngCore, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.next_u32() & 1 == 1).collect()
}

pub fn embed(
    scheme: &dyn Scheme,
    prf: &dyn UnitPrf,
    model_config: &ModelConfig,
    payload: &[bool],
    config: &StegConfig,
    rng: &mut dyn RngCore,
    debug: bool,
) -> Transcript {
    let mut model = build(model_config);
    scheme
        .generate(
            EmbedContext {
                prf,
                model: model.as_mut(),
                model_digest: model_config.digest(),
                prompt: &Prompt::default(),
                rng,
                options: GenerateOptions {
                    debug,
                    ..Default::default()
                },
            },
            payload,
            config,
        )
        .unwrap()
}

/// Three-token chain with uneven transitions; vocab 3 exercises padding.
pub fn markov_config(max_len: usize) -> ModelConfig {
    ModelConfig::new(
        "markov",
        serde_json::json!({
            "initial": [0.5, 0.3, 0.2],
            "transitions": [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]]
        }),
    )
    .with_max_len(max_len)
}
