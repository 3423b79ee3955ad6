// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cardinality-constrained mask search.
//!
//! The objective of a mask `m` with `k` zeros is
//! `log p(y | x) - log p(y | m ⊙ x)`; larger means the masked positions
//! matter more for reproducing `y`. The search:
//!
//! 1. takes one gradient of the masked log-likelihood at `m = 1`,
//! 2. masks the `k` positions with the largest gradient magnitude,
//! 3. repeatedly samples a kept position `l` and a masked position `v` from
//!    softmax distributions over the gradient magnitudes restricted to each
//!    support, swaps them, and keeps the swap only if the masked
//!    log-likelihood strictly decreases.

use std::collections::HashMap;

use itertools::Itertools;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};
use crate::mask::{GradientGuide, MaskState};
use crate::model::{CountingModel, ScoredGenerator};
use crate::tokens::TokenSequence;

pub const DEFAULT_ITERATIONS: usize = 50;
pub const DEFAULT_ORACLE_BUDGET: u128 = 100_000;

/// Which parts of the search use the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchVariant {
    #[default]
    Full,
    /// Uniformly random initial subset, gradient-guided swaps.
    RandomInit,
    /// Gradient initialisation, uniform swaps.
    UniformSampling,
}

impl SearchVariant {
    pub fn label(self) -> &'static str {
        match self {
            SearchVariant::Full => "xprompt",
            SearchVariant::RandomInit => "w/o-initialization",
            SearchVariant::UniformSampling => "w/o-probability",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub iterations: usize,
    pub seed: u64,
    pub temperature: f64,
    /// Reject swaps that leave the log-likelihood unchanged.
    pub strict_improvement: bool,
    pub variant: SearchVariant,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            temperature: 1.0,
            strict_improvement: true,
            variant: SearchVariant::Full,
        }
    }
}

impl SearchConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        SearchConfig { iterations, seed, ..SearchConfig::default() }
    }
}

/// Output record shared by every attribution method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub id: String,
    pub method: String,
    pub k: usize,
    /// Sorted explanatory (masked) positions.
    pub indices: Vec<usize>,
    /// Accepted-state masked log-likelihood, initial state first, one entry
    /// per iteration after that. Empty for methods that do not search.
    pub trace: Vec<f64>,
    pub gradient_calls: u64,
    pub forward_calls: u64,
    pub seed: u64,
}

impl AttributionResult {
    pub fn final_mask(&self, prompt_len: usize) -> Result<MaskState> {
        MaskState::from_zeros(prompt_len, &self.indices)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// One search iteration as seen by an observer.
#[derive(Debug)]
pub struct IterationEvent<'a> {
    /// 1-based iteration number.
    pub iteration: usize,
    pub proposal: (usize, usize),
    pub accepted: bool,
    /// State after the accept/reject decision.
    pub mask: &'a MaskState,
    pub log_likelihood: f64,
}

/// `log p(y | x) - log p(y | m ⊙ x)`.
pub fn objective<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    mask: &MaskState,
) -> Result<f64> {
    if mask.len() != prompt.len() {
        return Err(AttribError::LengthMismatch { prompt: prompt.len(), mask: mask.len() });
    }
    let full = model.log_likelihood(prompt, None, target)?;
    let masked = model.log_likelihood(prompt, Some(mask), target)?;
    Ok(full - masked)
}

/// Zeros at the `k` largest guide entries (ties to the lowest index).
pub fn init_mask(guide: &GradientGuide, k: usize) -> Result<MaskState> {
    let len = guide.len();
    if k >= len {
        return Err(AttribError::InvalidCardinality { k, len });
    }
    MaskState::from_zeros(len, &guide.top_k(k))
}

/// Draws a kept position `l` and a masked position `v`, each from a softmax
/// over `g / temperature` restricted to its own support.
pub fn sample_swap<R: Rng + ?Sized>(mask: &MaskState, guide: &GradientGuide, rng: &mut R) -> Result<(usize, usize)> {
    if guide.len() != mask.len() {
        return Err(AttribError::LengthMismatch { prompt: guide.len(), mask: mask.len() });
    }
    if mask.k() == 0 || mask.ones() == 0 {
        return Err(AttribError::InvalidState(format!(
            "cannot swap on a mask with {} zeros of {}",
            mask.k(),
            mask.len()
        )));
    }
    let (kept, masked): (Vec<usize>, Vec<usize>) = (0..mask.len()).partition(|&i| mask.is_kept(i));
    let l = kept[softmax_draw(&kept, guide, rng)?];
    let v = masked[softmax_draw(&masked, guide, rng)?];
    Ok((l, v))
}

fn softmax_draw<R: Rng + ?Sized>(support: &[usize], guide: &GradientGuide, rng: &mut R) -> Result<usize> {
    let g = guide.magnitudes();
    let t = guide.temperature();
    let max = support.iter().map(|&i| g[i]).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = support.iter().map(|&i| ((g[i] - max) / t).exp()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| AttribError::InvalidState(format!("sampling weights: {e}")))?;
    Ok(dist.sample(rng))
}

pub fn xprompt_search<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    k: usize,
    config: &SearchConfig,
) -> Result<AttributionResult> {
    xprompt_search_observed(model, prompt, target, k, config, &mut |_| {})
}

/// [`xprompt_search`] with a callback after every iteration.
pub fn xprompt_search_observed<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    k: usize,
    config: &SearchConfig,
    observer: &mut dyn FnMut(&IterationEvent<'_>),
) -> Result<AttributionResult> {
    if !model.supports_gradient() {
        return Err(AttribError::UnsupportedCapability("mask gradients"));
    }
    let len = prompt.len();
    if k == 0 || k >= len {
        return Err(AttribError::InvalidCardinality { k, len });
    }
    if config.iterations == 0 {
        return Err(AttribError::InvalidArgument("iterations must be at least 1".into()));
    }

    let counted = CountingModel::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Computed for the objective; also validates inputs before the gradient.
    counted.log_likelihood(prompt, None, target)?;
    let gradient = counted.mask_gradient(prompt, target, &vec![1.0; len])?;
    let guide = GradientGuide::from_gradient(&gradient, config.temperature)?;

    let mut mask = match config.variant {
        SearchVariant::RandomInit => {
            let mut zeros = sample(&mut rng, len, k).into_vec();
            zeros.sort_unstable();
            MaskState::from_zeros(len, &zeros)?
        }
        SearchVariant::Full | SearchVariant::UniformSampling => init_mask(&guide, k)?,
    };
    let swap_guide = match config.variant {
        SearchVariant::UniformSampling => GradientGuide::uniform(len),
        _ => guide,
    };

    let mut seen: HashMap<MaskState, f64> = HashMap::new();
    let mut current = counted.log_likelihood(prompt, Some(&mask), target)?;
    seen.insert(mask.clone(), current);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    trace.push(current);

    for iteration in 1..=config.iterations {
        let (l, v) = sample_swap(&mask, &swap_guide, &mut rng)?;
        let mut proposal = mask.clone();
        proposal.swap(l, v)?;
        let value = match seen.get(&proposal) {
            Some(&cached) => cached,
            None => {
                let value = counted.log_likelihood(prompt, Some(&proposal), target)?;
                seen.insert(proposal.clone(), value);
                value
            }
        };
        let accepted = if config.strict_improvement { value < current } else { value <= current };
        if accepted {
            mask = proposal;
            current = value;
        }
        debug_assert_eq!(mask.k(), k);
        trace.push(current);
        observer(&IterationEvent { iteration, proposal: (l, v), accepted, mask: &mask, log_likelihood: current });
    }

    Ok(AttributionResult {
        id: String::new(),
        method: config.variant.label().to_string(),
        k,
        indices: mask.zeros(),
        trace,
        gradient_calls: counted.gradient_calls(),
        forward_calls: counted.forward_calls(),
        seed: config.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_mask: MaskState,
    pub best_objective: f64,
    /// Number of masks scored.
    pub evaluations: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Scores every `k`-subset and returns the maximiser of the objective, ties
/// to the lexicographically smallest index set.
pub fn brute_force_oracle<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    k: usize,
    budget: u128,
) -> Result<OracleResult> {
    let len = prompt.len();
    if k > len {
        return Err(AttribError::InvalidCardinality { k, len });
    }
    let combinations = binomial(len, k);
    if combinations > budget {
        return Err(AttribError::OracleBudget { len, k, combinations, budget });
    }
    let full = model.log_likelihood(prompt, None, target)?;
    let mut best: Option<(MaskState, f64)> = None;
    let mut evaluations = 0;
    for zeros in (0..len).combinations(k) {
        let mask = MaskState::from_zeros(len, &zeros)?;
        let value = full - model.log_likelihood(prompt, Some(&mask), target)?;
        evaluations += 1;
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((mask, value));
        }
    }
    let (best_mask, best_objective) = best.expect("at least one subset");
    Ok(OracleResult { best_mask, best_objective, evaluations })
}
