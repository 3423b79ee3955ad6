// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small differentiable autoregressive model with planted ground truth.
//!
//! The prompt is summarised into one hidden vector
//!
//! ```text
//! h(m) = (1/T) * ( Σ_{i ungrouped} w_i m_i E[x_i]  +  Σ_G w_G gate_G(m) P_G )
//! ```
//!
//! where `P_G` is the elementwise maximum of the members' token embeddings.
//! Step `j` reads `tanh(h + c_j)` through a linear layer, with `c_0` a start
//! vector and `c_j` the embedding of the previous target token.
//!
//! `gate_G` is an OR over the members' mask values: it equals 1 whenever at
//! least one member is kept and 0 when all are masked, for any binary mask.
//! Its continuous form
//!
//! ```text
//! gate(m) = 1 - Π(1 - m_i) - Π(m_i) * Σ(1 - m_i)
//! ```
//!
//! is a polynomial with `∂gate/∂m_i = 1` at the all-ones mask, so grouped
//! positions receive a nonzero gradient even though masking any single member
//! has no effect.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{check_inputs, check_prompt, log_softmax_in_place, MaskMode, ScoredGenerator};
use crate::error::{AttribError, Result};
use crate::mask::MaskState;
use crate::tokens::TokenSequence;

/// Reserved end-of-sequence id.
pub const EOS_TOKEN: u32 = 0;

const START_SCALE: f64 = 0.5;
const PREV_SCALE: f64 = 0.5;
const READOUT_SCALE: f64 = 1.0;
const BIAS_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyGroup {
    pub positions: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub vocabulary_size: usize,
    pub embedding_dim: usize,
    pub max_prompt_length: usize,
    /// Per-position influence; positions past the end have weight 0.
    pub influence_weights: Vec<f64>,
    pub redundancy_groups: Vec<RedundancyGroup>,
    pub mask_mode: MaskMode,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            vocabulary_size: 50,
            embedding_dim: 16,
            max_prompt_length: 128,
            influence_weights: Vec::new(),
            redundancy_groups: Vec::new(),
            mask_mode: MaskMode::ZeroEmbedding,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn with_seed(seed: u64) -> Self {
        ToyConfig { seed, ..ToyConfig::default() }
    }

    /// A config with randomly planted structure: a sparse set of strongly
    /// influential positions, a background of weak ones, and one redundancy
    /// pair per block of twelve positions.
    pub fn planted(seed: u64, max_prompt_length: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let mut weights = vec![0.0; max_prompt_length];
        for w in weights.iter_mut() {
            let r = unit.sample(&mut rng);
            *w = if r < 0.1 {
                3.0 + 5.0 * unit.sample(&mut rng)
            } else if r < 0.25 {
                0.2 + 0.8 * unit.sample(&mut rng)
            } else {
                0.0
            };
        }
        let mut groups = Vec::new();
        for start in (0..max_prompt_length).step_by(12) {
            let span = (max_prompt_length - start).min(12);
            if span < 2 {
                break;
            }
            let a = start + (unit.sample(&mut rng) * span as f64) as usize % span;
            let mut b = start + (unit.sample(&mut rng) * span as f64) as usize % span;
            if b == a {
                b = start + (a - start + 1) % span;
            }
            let weight = 6.0 + 4.0 * unit.sample(&mut rng);
            weights[a] = 0.0;
            weights[b] = 0.0;
            let mut positions = vec![a, b];
            positions.sort_unstable();
            groups.push(RedundancyGroup { positions, weight });
        }
        ToyConfig {
            max_prompt_length,
            influence_weights: weights,
            redundancy_groups: groups,
            seed,
            ..ToyConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AttribError::InvalidArgument(msg));
        if self.vocabulary_size < 2 {
            return bad("vocabulary_size must be at least 2".into());
        }
        if self.embedding_dim == 0 || self.max_prompt_length == 0 {
            return bad("embedding_dim and max_prompt_length must be positive".into());
        }
        if let Some(w) = self.influence_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return bad(format!("influence weights must be finite and nonnegative, got {w}"));
        }
        let mut seen = vec![false; self.max_prompt_length];
        for group in &self.redundancy_groups {
            if group.positions.len() < 2 {
                return bad("redundancy groups need at least two positions".into());
            }
            if !(group.weight.is_finite() && group.weight >= 0.0) {
                return bad(format!("group weight must be nonnegative, got {}", group.weight));
            }
            for &p in &group.positions {
                if p >= self.max_prompt_length {
                    return bad(format!("group position {p} beyond max_prompt_length"));
                }
                if seen[p] {
                    return bad(format!("position {p} appears in more than one group"));
                }
                seen[p] = true;
            }
        }
        Ok(())
    }
}

/// Row-major model parameters, all drawn from the config seed.
#[derive(Debug, Clone)]
pub struct ToyParameters {
    /// `vocab × dim` token embeddings.
    pub embed: Vec<f64>,
    /// `dim` context vector for the first target step.
    pub start: Vec<f64>,
    /// `vocab × dim` previous-token context.
    pub prev: Vec<f64>,
    /// `vocab × dim` output projection.
    pub readout: Vec<f64>,
    /// `vocab` output bias.
    pub bias: Vec<f64>,
}

impl ToyParameters {
    fn draw(vocab: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
        };
        let embed = normal(vocab * dim, 1.0);
        let start = normal(dim, START_SCALE);
        let prev = normal(vocab * dim, PREV_SCALE);
        let readout = normal(vocab * dim, READOUT_SCALE);
        let bias = normal(vocab, BIAS_SCALE);
        ToyParameters { embed, start, prev, readout, bias }
    }
}

#[derive(Debug, Clone)]
pub struct ControlledToyLM {
    config: ToyConfig,
    params: ToyParameters,
    /// Group index per position, if any.
    group_of: Vec<Option<usize>>,
}

impl ControlledToyLM {
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let params = ToyParameters::draw(config.vocabulary_size, config.embedding_dim, config.seed);
        let mut group_of = vec![None; config.max_prompt_length];
        for (g, group) in config.redundancy_groups.iter().enumerate() {
            for &p in &group.positions {
                group_of[p] = Some(g);
            }
        }
        Ok(ControlledToyLM { config, params, group_of })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn parameters(&self) -> &ToyParameters {
        &self.params
    }

    pub fn weight(&self, position: usize) -> f64 {
        self.config.influence_weights.get(position).copied().unwrap_or(0.0)
    }

    /// True when masking `position` alone can never change any output.
    pub fn is_irrelevant(&self, position: usize) -> bool {
        self.weight(position) == 0.0 && self.group_of.get(position).copied().flatten().is_none()
    }

    fn dim(&self) -> usize {
        self.config.embedding_dim
    }

    fn embedding(&self, token: u32) -> &[f64] {
        let d = self.dim();
        &self.params.embed[token as usize * d..(token as usize + 1) * d]
    }

    fn context(&self, prefix_last: Option<u32>) -> &[f64] {
        let d = self.dim();
        match prefix_last {
            None => &self.params.start,
            Some(t) => &self.params.prev[t as usize * d..(t as usize + 1) * d],
        }
    }

    /// Groups restricted to positions inside a prompt of length `len`.
    fn groups_within(&self, len: usize) -> Vec<(f64, Vec<usize>)> {
        self.config
            .redundancy_groups
            .iter()
            .filter_map(|g| {
                let members: Vec<usize> = g.positions.iter().copied().filter(|&p| p < len).collect();
                (!members.is_empty()).then_some((g.weight, members))
            })
            .collect()
    }

    fn pooled(&self, prompt: &[u32], members: &[usize]) -> Vec<f64> {
        let mut pooled = vec![f64::NEG_INFINITY; self.dim()];
        for &p in members {
            for (acc, e) in pooled.iter_mut().zip(self.embedding(prompt[p])) {
                *acc = acc.max(*e);
            }
        }
        pooled
    }

    /// Prompt summary at a point of the continuous relaxation.
    fn hidden_relaxed(&self, prompt: &[u32], point: &[f64]) -> Vec<f64> {
        let t = prompt.len();
        let mut h = vec![0.0; self.dim()];
        for (i, (&tok, &m)) in prompt.iter().zip(point).enumerate() {
            if self.group_of[i].is_some() {
                continue;
            }
            let scale = self.weight(i) * m;
            for (acc, e) in h.iter_mut().zip(self.embedding(tok)) {
                *acc += scale * e;
            }
        }
        for (weight, members) in self.groups_within(t) {
            let values: Vec<f64> = members.iter().map(|&p| point[p]).collect();
            let scale = weight * or_gate(&values);
            for (acc, e) in h.iter_mut().zip(self.pooled(prompt, &members)) {
                *acc += scale * e;
            }
        }
        let inv = 1.0 / t as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    /// Prompt summary with masked positions dropped.
    fn hidden_removed(&self, prompt: &[u32], mask: &MaskState) -> Vec<f64> {
        let mut h = vec![0.0; self.dim()];
        let kept = mask.ones();
        if kept == 0 {
            return h;
        }
        for (i, &tok) in prompt.iter().enumerate() {
            if !mask.is_kept(i) || self.group_of[i].is_some() {
                continue;
            }
            let w = self.weight(i);
            for (acc, e) in h.iter_mut().zip(self.embedding(tok)) {
                *acc += w * e;
            }
        }
        for (weight, members) in self.groups_within(prompt.len()) {
            let survivors: Vec<usize> = members.into_iter().filter(|&p| mask.is_kept(p)).collect();
            if survivors.is_empty() {
                continue;
            }
            for (acc, e) in h.iter_mut().zip(self.pooled(prompt, &survivors)) {
                *acc += weight * e;
            }
        }
        let inv = 1.0 / kept as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    fn hidden(&self, prompt: &[u32], mask: Option<&MaskState>) -> Vec<f64> {
        match (mask, self.config.mask_mode) {
            (Some(mask), MaskMode::Removal) => self.hidden_removed(prompt, mask),
            (Some(mask), MaskMode::ZeroEmbedding) => self.hidden_relaxed(prompt, &mask.as_weights()),
            (None, _) => self.hidden_relaxed(prompt, &vec![1.0; prompt.len()]),
        }
    }

    /// Activation `tanh(h + c)` and next-token log-probabilities.
    fn step(&self, hidden: &[f64], prefix_last: Option<u32>) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let act: Vec<f64> = hidden.iter().zip(self.context(prefix_last)).map(|(h, c)| (h + c).tanh()).collect();
        let mut logits: Vec<f64> = (0..self.config.vocabulary_size)
            .map(|v| {
                let row = &self.params.readout[v * d..(v + 1) * d];
                self.params.bias[v] + row.iter().zip(&act).map(|(r, a)| r * a).sum::<f64>()
            })
            .collect();
        log_softmax_in_place(&mut logits);
        (act, logits)
    }

    /// Log-likelihood at an arbitrary point of the relaxation `[0, 1]^T`.
    pub fn relaxed_log_likelihood(&self, prompt: &TokenSequence, target: &TokenSequence, point: &[f64]) -> Result<f64> {
        check_inputs(self, prompt, None, target)?;
        if point.len() != prompt.len() {
            return Err(AttribError::LengthMismatch { prompt: prompt.len(), mask: point.len() });
        }
        let h = self.hidden_relaxed(prompt, point);
        Ok(self.score_hidden(&h, target))
    }

    fn score_hidden(&self, hidden: &[f64], target: &[u32]) -> f64 {
        let mut total = 0.0;
        let mut last = None;
        for &y in target {
            let (_, lp) = self.step(hidden, last);
            total += lp[y as usize];
            last = Some(y);
        }
        total
    }
}

/// OR over mask values that is exact on `{0, 1}` and smooth inside.
fn or_gate(m: &[f64]) -> f64 {
    if m.len() == 1 {
        return m[0];
    }
    let prod_off: f64 = m.iter().map(|v| 1.0 - v).product();
    let prod_on: f64 = m.iter().product();
    let sum_off: f64 = m.iter().map(|v| 1.0 - v).sum();
    1.0 - prod_off - prod_on * sum_off
}

fn or_gate_partial(m: &[f64], i: usize) -> f64 {
    if m.len() == 1 {
        return 1.0;
    }
    let others = m.iter().enumerate().filter(|(j, _)| *j != i);
    let prod_off_others: f64 = others.clone().map(|(_, v)| 1.0 - v).product();
    let prod_on_others: f64 = others.map(|(_, v)| *v).product();
    let sum_off: f64 = m.iter().map(|v| 1.0 - v).sum();
    prod_off_others - prod_on_others * sum_off + prod_on_others * m[i]
}

/// Deterministic word-to-id hashing used by the toy tokenizer. Never returns
/// the end-of-sequence id.
pub fn word_token(word: &str, vocabulary_size: usize) -> u32 {
    // FNV-1a
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in word.to_lowercase().bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    1 + (hash % (vocabulary_size as u64 - 1)) as u32
}

impl ScoredGenerator for ControlledToyLM {
    fn name(&self) -> &str {
        "toy-controlled"
    }

    fn vocabulary_size(&self) -> usize {
        self.config.vocabulary_size
    }

    fn max_prompt_length(&self) -> usize {
        self.config.max_prompt_length
    }

    fn supports_gradient(&self) -> bool {
        true
    }

    fn eos_token(&self) -> Option<u32> {
        Some(EOS_TOKEN)
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(text.split_whitespace().map(|w| word_token(w, self.config.vocabulary_size)).collect())
    }

    fn render_token(&self, id: u32) -> String {
        if id == EOS_TOKEN {
            "</s>".into()
        } else {
            format!("t{id}")
        }
    }

    fn next_token_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        prefix: &[u32],
    ) -> Result<Vec<f64>> {
        check_prompt(self, prompt, mask)?;
        if let Some(&id) = prefix.iter().find(|&&id| id as usize >= self.config.vocabulary_size) {
            return Err(AttribError::TokenOutOfRange { id, vocabulary_size: self.config.vocabulary_size });
        }
        let h = self.hidden(prompt, mask);
        Ok(self.step(&h, prefix.last().copied()).1)
    }

    fn teacher_forced_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        target: &TokenSequence,
    ) -> Result<Vec<Vec<f64>>> {
        check_inputs(self, prompt, mask, target)?;
        let h = self.hidden(prompt, mask);
        let mut last = None;
        Ok(target
            .iter()
            .map(|&y| {
                let (_, lp) = self.step(&h, last);
                last = Some(y);
                lp
            })
            .collect())
    }

    fn log_likelihood(&self, prompt: &TokenSequence, mask: Option<&MaskState>, target: &TokenSequence) -> Result<f64> {
        check_inputs(self, prompt, mask, target)?;
        let h = self.hidden(prompt, mask);
        Ok(self.score_hidden(&h, target))
    }

    fn mask_gradient(&self, prompt: &TokenSequence, target: &TokenSequence, eval_point: &[f64]) -> Result<Vec<f64>> {
        check_inputs(self, prompt, None, target)?;
        if eval_point.len() != prompt.len() {
            return Err(AttribError::LengthMismatch { prompt: prompt.len(), mask: eval_point.len() });
        }
        let d = self.dim();
        let t = prompt.len();
        let h = self.hidden_relaxed(prompt, eval_point);

        // dL/dh accumulated over target steps.
        let mut dh = vec![0.0; d];
        let mut last = None;
        for &y in target.iter() {
            let (act, lp) = self.step(&h, last);
            let mut dact = vec![0.0; d];
            for (v, lpv) in lp.iter().enumerate() {
                let coeff = if v == y as usize { 1.0 } else { 0.0 } - lpv.exp();
                let row = &self.params.readout[v * d..(v + 1) * d];
                for (acc, r) in dact.iter_mut().zip(row) {
                    *acc += coeff * r;
                }
            }
            for ((acc, da), a) in dh.iter_mut().zip(&dact).zip(&act) {
                *acc += da * (1.0 - a * a);
            }
            last = Some(y);
        }

        let inv = 1.0 / t as f64;
        let dot = |v: &[f64]| v.iter().zip(&dh).map(|(a, b)| a * b).sum::<f64>();
        let mut grad = vec![0.0; t];
        for (i, &tok) in prompt.iter().enumerate() {
            if self.group_of[i].is_none() {
                grad[i] = inv * self.weight(i) * dot(self.embedding(tok));
            }
        }
        for (weight, members) in self.groups_within(t) {
            let values: Vec<f64> = members.iter().map(|&p| eval_point[p]).collect();
            let base = inv * weight * dot(&self.pooled(prompt, &members));
            for (slot, &p) in members.iter().enumerate() {
                grad[p] = base * or_gate_partial(&values, slot);
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_gate_is_exact_on_corners() {
        for bits in 0u32..8 {
            let m: Vec<f64> = (0..3).map(|i| f64::from((bits >> i) & 1)).collect();
            let expected = if bits == 0 { 0.0 } else { 1.0 };
            assert_eq!(or_gate(&m), expected, "corner {m:?}");
        }
        for i in 0..3 {
            assert_eq!(or_gate_partial(&[1.0, 1.0, 1.0], i), 1.0);
        }
    }

    #[test]
    fn or_gate_partial_matches_difference_quotient() {
        let m = [0.3, 0.8, 0.55];
        let h = 1e-6;
        for i in 0..3 {
            let mut up = m;
            let mut down = m;
            up[i] += h;
            down[i] -= h;
            let fd = (or_gate(&up) - or_gate(&down)) / (2.0 * h);
            assert!((fd - or_gate_partial(&m, i)).abs() < 1e-8);
        }
    }

    #[test]
    fn config_validation() {
        let c = ToyConfig { influence_weights: vec![1.0, -1.0], ..Default::default() };
        assert!(ControlledToyLM::new(c).is_err());
        let c = ToyConfig {
            redundancy_groups: vec![
                RedundancyGroup { positions: vec![0, 1], weight: 1.0 },
                RedundancyGroup { positions: vec![1, 2], weight: 1.0 },
            ],
            ..Default::default()
        };
        assert!(ControlledToyLM::new(c).is_err());
        let c = ToyConfig {
            redundancy_groups: vec![RedundancyGroup { positions: vec![3], weight: 1.0 }],
            ..Default::default()
        };
        assert!(ControlledToyLM::new(c).is_err());
    }

    #[test]
    fn tokenizer_avoids_eos() {
        for w in ["a", "doctor", "patient", "", "Zebra"] {
            let id = word_token(w, 50);
            assert!((1..50).contains(&id));
        }
        assert_eq!(word_token("Doctor", 50), word_token("doctor", 50));
    }

    #[test]
    fn planted_config_is_valid_and_seeded() {
        let a = ToyConfig::planted(3, 40);
        let b = ToyConfig::planted(3, 40);
        assert_eq!(a, b);
        assert!(ControlledToyLM::new(a).is_ok());
        assert_ne!(ToyConfig::planted(4, 40), b);
    }
}
