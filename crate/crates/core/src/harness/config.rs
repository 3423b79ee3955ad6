// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Method, MethodSettings};
use crate::baselines::DEFAULT_IG_STEPS;
use crate::error::{AttribError, Result};
use crate::model::{MaskMode, ModelSpec};
use crate::search::{DEFAULT_ITERATIONS, DEFAULT_ORACLE_BUDGET};

/// Declarative experiment description, read from TOML.
///
/// ```toml
/// dataset = "prompts.jsonl"       # required
/// model = "toy-controlled"
/// model_seed = 0
/// mask_mode = "zero-embedding"    # or "removal"
/// max_prompt_length = 128
/// methods = ["xprompt", "random", "loo", "ig"]
/// k_values = [3]
/// iterations = 50
/// seeds = [0]
/// max_new_tokens = 64
/// min_prompt_length = 15
/// ig_steps = 32
/// temperature = 1.0
/// oracle_budget = 100000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub model: String,
    pub model_seed: u64,
    pub mask_mode: MaskMode,
    pub max_prompt_length: usize,
    pub methods: Vec<Method>,
    pub k_values: Vec<usize>,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub max_new_tokens: usize,
    pub min_prompt_length: usize,
    pub ig_steps: usize,
    pub temperature: f64,
    pub oracle_budget: u64,
}

const KEYS: [&str; 14] = [
    "dataset",
    "model",
    "model_seed",
    "mask_mode",
    "max_prompt_length",
    "methods",
    "k_values",
    "iterations",
    "seeds",
    "max_new_tokens",
    "min_prompt_length",
    "ig_steps",
    "temperature",
    "oracle_budget",
];

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            model: "toy-controlled".into(),
            model_seed: 0,
            mask_mode: MaskMode::ZeroEmbedding,
            max_prompt_length: 128,
            methods: vec![Method::Xprompt, Method::Random, Method::Loo, Method::Ig],
            k_values: vec![3],
            iterations: DEFAULT_ITERATIONS,
            seeds: vec![0],
            max_new_tokens: 64,
            min_prompt_length: 15,
            ig_steps: DEFAULT_IG_STEPS,
            temperature: 1.0,
            oracle_budget: DEFAULT_ORACLE_BUDGET as u64,
        }
    }

    /// Parses TOML; relative dataset paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| AttribError::Config {
            key: "<document>".into(),
            message: e.message().to_string(),
        })?;
        if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(AttribError::Config { key: key.clone(), message: "unknown key".into() });
        }
        let dataset: PathBuf = field(&table, "dataset")?
            .ok_or_else(|| AttribError::Config { key: "dataset".into(), message: "missing required key".into() })?;
        let mut config = ExperimentConfig::new(match base_dir {
            Some(base) if dataset.is_relative() => base.join(dataset),
            _ => dataset,
        });
        macro_rules! set {
            ($name:ident) => {
                if let Some(v) = field(&table, stringify!($name))? {
                    config.$name = v;
                }
            };
        }
        set!(model);
        set!(model_seed);
        set!(mask_mode);
        set!(max_prompt_length);
        set!(methods);
        set!(k_values);
        set!(iterations);
        set!(seeds);
        set!(max_new_tokens);
        set!(min_prompt_length);
        set!(ig_steps);
        set!(temperature);
        set!(oracle_budget);
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AttribError::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, message: &str| Err(AttribError::Config { key: key.into(), message: message.into() });
        if self.methods.is_empty() {
            return fail("methods", "must not be empty");
        }
        if self.k_values.is_empty() {
            return fail("k_values", "must not be empty");
        }
        if self.seeds.is_empty() {
            return fail("seeds", "must not be empty");
        }
        if self.iterations == 0 {
            return fail("iterations", "must be at least 1");
        }
        if self.max_new_tokens == 0 {
            return fail("max_new_tokens", "must be at least 1");
        }
        if self.ig_steps == 0 {
            return fail("ig_steps", "must be at least 1");
        }
        if self.max_prompt_length == 0 {
            return fail("max_prompt_length", "must be at least 1");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return fail("temperature", "must be positive");
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            max_prompt_length: self.max_prompt_length,
            mask_mode: self.mask_mode,
            ..ModelSpec::new(self.model.clone(), self.model_seed)
        }
    }

    pub fn method_settings(&self) -> MethodSettings {
        MethodSettings {
            iterations: self.iterations,
            temperature: self.temperature,
            ig_steps: self.ig_steps,
            oracle_budget: u128::from(self.oracle_budget),
        }
    }
}

fn field<T: DeserializeOwned>(table: &toml::Table, key: &str) -> Result<Option<T>> {
    table
        .get(key)
        .map(|value| {
            value
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| AttribError::Config { key: key.into(), message: e.message().to_string() })
        })
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
            dataset = "data.jsonl"
            model = "toy-controlled"
            methods = ["xprompt", "loo"]
            k_values = [1, 2, 3]
            seeds = [4, 5]
            mask_mode = "removal"
        "#;
        let c = ExperimentConfig::from_toml_str(text, Some(Path::new("/tmp/base"))).unwrap();
        assert_eq!(c.dataset, PathBuf::from("/tmp/base/data.jsonl"));
        assert_eq!(c.methods, vec![Method::Xprompt, Method::Loo]);
        assert_eq!(c.k_values, vec![1, 2, 3]);
        assert_eq!(c.mask_mode, MaskMode::Removal);
        assert_eq!(c.iterations, DEFAULT_ITERATIONS);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let key_of = |text: &str| match ExperimentConfig::from_toml_str(text, None) {
            Err(AttribError::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(key_of("dataset = \"d\"\nbogus = 1"), "bogus");
        assert_eq!(key_of("dataset = \"d\"\niterations = \"many\""), "iterations");
        assert_eq!(key_of("dataset = \"d\"\nmethods = [\"captum\"]"), "methods");
        assert_eq!(key_of("dataset = \"d\"\nk_values = []"), "k_values");
        assert_eq!(key_of("model = \"toy-controlled\""), "dataset");
    }
}
