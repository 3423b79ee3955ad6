// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded toy instances with known structure, used by the test suites, the
//! CLI's demo dataset, and the C bindings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{generate, ControlledToyLM, RedundancyGroup, ToyConfig};
use crate::tokens::TokenSequence;

pub struct ToyInstance {
    pub model: ControlledToyLM,
    pub prompt: TokenSequence,
    pub target: TokenSequence,
}

impl ToyInstance {
    fn from_config(config: ToyConfig, prompt_len: usize, target_len: usize, seed: u64) -> Result<Self> {
        let vocab = config.vocabulary_size;
        let model = ControlledToyLM::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
        let ids = (0..prompt_len).map(|_| rng.random_range(1..vocab as u32)).collect();
        let prompt = TokenSequence::new(ids, vocab)?;
        let target = generate(&model, &prompt, None, target_len)?;
        Ok(ToyInstance { model, prompt, target })
    }
}

/// Random planted structure over `prompt_len` positions.
pub fn planted_instance(seed: u64, prompt_len: usize, target_len: usize) -> Result<ToyInstance> {
    ToyInstance::from_config(ToyConfig::planted(seed, prompt_len), prompt_len, target_len, seed)
}

/// Only position `position` carries weight.
pub fn single_influence_instance(
    seed: u64,
    prompt_len: usize,
    position: usize,
    target_len: usize,
) -> Result<ToyInstance> {
    let mut weights = vec![0.0; prompt_len];
    weights[position] = prompt_len as f64;
    let config = ToyConfig { max_prompt_length: prompt_len, influence_weights: weights, ..ToyConfig::with_seed(seed) };
    ToyInstance::from_config(config, prompt_len, target_len, seed)
}

/// A dominant redundancy pair plus weak ungrouped distractors. Returns the
/// instance and the sorted pair.
pub fn redundancy_pair_instance(seed: u64, prompt_len: usize, target_len: usize) -> Result<(ToyInstance, [usize; 2])> {
    let (config, pair) = redundancy_pair_config(seed, prompt_len);
    Ok((ToyInstance::from_config(config, prompt_len, target_len, seed)?, pair))
}

/// The model half of [`redundancy_pair_instance`], for prompts of exactly
/// `prompt_len` tokens.
pub fn redundancy_pair_config(seed: u64, prompt_len: usize) -> (ToyConfig, [usize; 2]) {
    assert!(prompt_len >= 2, "a pair needs two positions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0c7_0a11);
    let a = rng.random_range(0..prompt_len);
    let mut b = rng.random_range(0..prompt_len - 1);
    if b >= a {
        b += 1;
    }
    let pair = [a.min(b), a.max(b)];
    let weights: Vec<f64> = (0..prompt_len)
        .map(|i| if pair.contains(&i) { 0.0 } else { 0.15 * prompt_len as f64 * rng.random::<f64>() })
        .collect();
    let config = ToyConfig {
        max_prompt_length: prompt_len,
        influence_weights: weights,
        redundancy_groups: vec![RedundancyGroup { positions: pair.to_vec(), weight: 1.5 * prompt_len as f64 }],
        ..ToyConfig::with_seed(seed)
    };
    (config, pair)
}

/// Synthetic JSONL dataset lines for the demo corpus: prompts of
/// `min_words..=max_words` words drawn from a fixed word list.
pub fn synthetic_dataset_lines(count: usize, min_words: usize, max_words: usize, seed: u64) -> Vec<String> {
    const WORDS: [&str; 48] = [
        "write",
        "a",
        "story",
        "about",
        "the",
        "doctor",
        "and",
        "his",
        "patient",
        "explain",
        "why",
        "sky",
        "is",
        "blue",
        "summarize",
        "following",
        "article",
        "on",
        "stock",
        "market",
        "give",
        "three",
        "tips",
        "for",
        "staying",
        "healthy",
        "describe",
        "time",
        "when",
        "you",
        "had",
        "to",
        "make",
        "difficult",
        "decision",
        "project",
        "manager",
        "construction",
        "company",
        "book",
        "publish",
        "publishing",
        "advice",
        "smoking",
        "addiction",
        "help",
        "news",
        "headline",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(min_words..=max_words);
            let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            serde_json::json!({ "id": format!("s{i:04}"), "prompt": words.join(" ") }).to_string()
        })
        .collect()
}
