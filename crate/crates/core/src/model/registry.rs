use std::collections::BTreeMap;

use super::remote::RemoteModel;
use super::replay::ReplayModel;
use super::toy::{CoinModel, MarkovModel, UniformModel};
use super::{Model, ModelConfig};
use crate::error::{Error, Result};

pub type ModelFactory = fn(&ModelConfig) -> Result<Box<dyn Model>>;

/// Maps the `"type"` field of a model config to a constructor.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("coin", |c| Ok(Box::new(CoinModel::from_config(c)?)));
        reg.register("uniform", |c| Ok(Box::new(UniformModel::from_config(c)?)));
        reg.register("markov", |c| Ok(Box::new(MarkovModel::from_config(c)?)));
        reg.register("replay", |c| Ok(Box::new(ReplayModel::from_config(c)?)));
        reg.register("remote", |c| Ok(Box::new(RemoteModel::from_config(c)?)));
        reg
    }

    pub fn register(&mut self, kind: &str, factory: ModelFactory) {
        self.factories.insert(kind.to_string(), factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, cfg: &ModelConfig) -> Result<Box<dyn Model>> {
        let factory = self.factories.get(&cfg.kind).ok_or_else(|| {
            Error::config(format!(
                "unknown model type {:?} (known: {})",
                cfg.kind,
                self.kinds().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(cfg)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
