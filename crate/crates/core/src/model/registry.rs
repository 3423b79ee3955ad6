// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ControlledToyLM, KeywordToyLM, MaskMode, ScoredGenerator, ToyConfig};
use crate::error::{AttribError, Result};
use crate::suite::redundancy_pair_config;

/// Prompt length the `toy-redundancy` adapter is built for.
pub const REDUNDANCY_PROMPT_LENGTH: usize = 10;

/// Everything needed to rebuild an adapter deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub seed: u64,
    pub max_prompt_length: usize,
    pub mask_mode: MaskMode,
    /// Cache directory for adapters that load weights; taken from
    /// `XATTRIB_CACHE_DIR` when unset.
    pub cache_dir: Option<PathBuf>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        ModelSpec {
            name: name.into(),
            seed,
            max_prompt_length: 128,
            mask_mode: MaskMode::default(),
            cache_dir: std::env::var_os("XATTRIB_CACHE_DIR").map(PathBuf::from),
        }
    }
}

pub type ModelFactory = Box<dyn Fn(&ModelSpec) -> Result<Box<dyn ScoredGenerator>> + Send + Sync>;

/// Adapters keyed by name.
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry { factories: BTreeMap::new() }
    }

    /// Registry holding the built-in toy adapters: `toy-controlled` (planted
    /// structure), `toy-redundancy` (one redundant pair among the first
    /// [`REDUNDANCY_PROMPT_LENGTH`] positions, nothing else matters much) and
    /// `toy-keyword` (no gradients).
    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        registry.register(
            "toy-controlled",
            Box::new(|spec: &ModelSpec| {
                let mut config = ToyConfig::planted(spec.seed, spec.max_prompt_length);
                config.mask_mode = spec.mask_mode;
                Ok(Box::new(ControlledToyLM::new(config)?) as Box<dyn ScoredGenerator>)
            }),
        );
        registry.register(
            "toy-redundancy",
            Box::new(|spec: &ModelSpec| {
                let (mut config, _) = redundancy_pair_config(spec.seed, REDUNDANCY_PROMPT_LENGTH);
                config.mask_mode = spec.mask_mode;
                Ok(Box::new(ControlledToyLM::new(config)?) as Box<dyn ScoredGenerator>)
            }),
        );
        registry.register(
            "toy-keyword",
            Box::new(|spec: &ModelSpec| {
                Ok(Box::new(KeywordToyLM::new(50, spec.max_prompt_length, 5, spec.seed)?) as Box<dyn ScoredGenerator>)
            }),
        );
        registry
    }

    pub fn register(&mut self, name: impl Into<String>, factory: ModelFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &ModelSpec) -> Result<Box<dyn ScoredGenerator>> {
        let factory = self.factories.get(&spec.name).ok_or_else(|| AttribError::UnknownModel(spec.name.clone()))?;
        factory(spec)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
