// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset ingestion, experiment grids, ablations, and artifact writers.

mod config;
mod dataset;
mod experiment;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{integrated_gradients, leave_one_out, random_k, DEFAULT_IG_STEPS};
use crate::error::{AttribError, Result};
use crate::model::ScoredGenerator;
use crate::search::{
    brute_force_oracle, xprompt_search, AttributionResult, SearchConfig, DEFAULT_ITERATIONS, DEFAULT_ORACLE_BUDGET,
};
use crate::tokens::TokenSequence;

pub use config::ExperimentConfig;
pub use dataset::{ingest, ingest_reader, Dataset, IngestOptions, PromptInstance};
pub use experiment::{
    aggregate, run_ablation, run_experiment, run_pr_vs_k, write_ablation_csv, write_aggregate_csv, write_pr_vs_k_csv,
    write_results_jsonl, AblationOutput, AblationRow, AblationRun, AggregateRow, AggregateTable, CurvePoint,
    ExperimentOutput, FailureRecord, ResultRecord, ABLATION_CHECKPOINTS,
};

/// Attribution methods selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Xprompt,
    Random,
    Loo,
    Ig,
    /// Exhaustive search; small prompts only.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Xprompt, Method::Random, Method::Loo, Method::Ig, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Xprompt => "xprompt",
            Method::Random => "random",
            Method::Loo => "loo",
            Method::Ig => "ig",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = AttribError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| AttribError::UnknownMethod(s.to_string()))
    }
}

/// Knobs shared by the methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub iterations: usize,
    pub temperature: f64,
    pub ig_steps: usize,
    pub oracle_budget: u128,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            iterations: DEFAULT_ITERATIONS,
            temperature: 1.0,
            ig_steps: DEFAULT_IG_STEPS,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
        }
    }
}

/// Runs one method. `k = 0` yields the empty explanation for every method
/// without touching the model.
pub fn run_method(
    model: &dyn ScoredGenerator,
    prompt: &TokenSequence,
    target: &TokenSequence,
    method: Method,
    k: usize,
    seed: u64,
    settings: &MethodSettings,
) -> Result<AttributionResult> {
    if k == 0 {
        return Ok(AttributionResult {
            id: String::new(),
            method: method.name().into(),
            k,
            indices: Vec::new(),
            trace: Vec::new(),
            gradient_calls: 0,
            forward_calls: 0,
            seed,
        });
    }
    match method {
        Method::Xprompt => {
            let config = SearchConfig {
                iterations: settings.iterations,
                seed,
                temperature: settings.temperature,
                ..SearchConfig::default()
            };
            xprompt_search(model, prompt, target, k, &config)
        }
        Method::Random => random_k(prompt.len(), k, seed),
        Method::Loo => leave_one_out(model, prompt, target)?.into_attribution(k, seed),
        Method::Ig => integrated_gradients(model, prompt, target, settings.ig_steps)?.into_attribution(k, seed),
        Method::Oracle => {
            if k >= prompt.len() {
                return Err(AttribError::InvalidCardinality { k, len: prompt.len() });
            }
            let best = brute_force_oracle(model, prompt, target, k, settings.oracle_budget)?;
            Ok(AttributionResult {
                id: String::new(),
                method: "oracle".into(),
                k,
                indices: best.best_mask.zeros(),
                trace: Vec::new(),
                gradient_calls: 0,
                forward_calls: best.evaluations + 1,
                seed,
            })
        }
    }
}

/// Per-unit seed from the global seed and the unit's identity, so adding
/// methods or instances never shifts existing results.
pub fn derive_seed(global: u64, instance_id: &str, method: &str, k: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(instance_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(method.as_bytes());
    hasher.update([0x1f]);
    hasher.update((k as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Short hex digest of a token sequence.
pub fn token_hash(ids: &[u32]) -> String {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.to_le_bytes());
    }
    hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}
