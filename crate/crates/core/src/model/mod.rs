// SPDX-License-Identifier: MIT OR Apache-2.0

//! The scored-generator contract that every attribution method consumes.
//!
//! An adapter exposes teacher-forced next-token distributions under a prompt
//! mask, greedy generation, and (optionally) the gradient of the masked
//! log-likelihood with respect to a continuous mask. Masked positions keep
//! their place in the sequence and have their embedding zeroed; adapters may
//! offer token removal instead via [`MaskMode::Removal`].

mod keyword;
mod registry;
mod toy;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};
use crate::mask::MaskState;
use crate::tokens::TokenSequence;

pub use keyword::KeywordToyLM;
pub use registry::{ModelFactory, ModelRegistry, ModelSpec, REDUNDANCY_PROMPT_LENGTH};
pub use toy::{word_token, ControlledToyLM, RedundancyGroup, ToyConfig, ToyParameters, EOS_TOKEN};

/// How a masked prompt position is presented to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Position kept, embedding replaced by the zero vector.
    #[default]
    ZeroEmbedding,
    /// Token dropped from the sequence.
    Removal,
}

/// Whether an adapter tolerates concurrent scoring calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Shared,
    Exclusive,
}

pub trait ScoredGenerator: Send + Sync {
    fn name(&self) -> &str;

    fn vocabulary_size(&self) -> usize;

    fn max_prompt_length(&self) -> usize;

    fn supports_gradient(&self) -> bool {
        false
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Shared
    }

    /// Token that terminates greedy generation, if any.
    fn eos_token(&self) -> Option<u32> {
        None
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>>;

    fn render_token(&self, id: u32) -> String {
        id.to_string()
    }

    /// Log-probabilities of the next token given the (masked) prompt and the
    /// generated prefix. `None` means the all-ones mask.
    fn next_token_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        prefix: &[u32],
    ) -> Result<Vec<f64>>;

    /// One next-token distribution per target position under teacher forcing.
    fn teacher_forced_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        target: &TokenSequence,
    ) -> Result<Vec<Vec<f64>>> {
        check_inputs(self, prompt, mask, target)?;
        (0..target.len()).map(|j| self.next_token_log_probs(prompt, mask, &target[..j])).collect()
    }

    /// `Σ_j log p(y_j | m ⊙ x, y_<j)`.
    fn log_likelihood(&self, prompt: &TokenSequence, mask: Option<&MaskState>, target: &TokenSequence) -> Result<f64> {
        let dists = self.teacher_forced_log_probs(prompt, mask, target)?;
        Ok(dists.iter().zip(target.iter()).map(|(d, &y)| d[y as usize]).sum())
    }

    /// Gradient of `log p(y | m ⊙ x)` with respect to `m` at `eval_point`,
    /// where `m_i` scales the embedding of prompt token `i`.
    fn mask_gradient(&self, _prompt: &TokenSequence, _target: &TokenSequence, _eval_point: &[f64]) -> Result<Vec<f64>> {
        Err(AttribError::UnsupportedCapability("mask gradients"))
    }
}

/// Validates the shared preconditions of scoring calls.
pub fn check_inputs<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    mask: Option<&MaskState>,
    target: &TokenSequence,
) -> Result<()> {
    check_prompt(model, prompt, mask)?;
    if target.is_empty() {
        return Err(AttribError::EmptyTarget);
    }
    target.check_vocabulary(model.vocabulary_size())
}

pub fn check_prompt<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    mask: Option<&MaskState>,
) -> Result<()> {
    if let Some(mask) = mask {
        if mask.len() != prompt.len() {
            return Err(AttribError::LengthMismatch { prompt: prompt.len(), mask: mask.len() });
        }
    }
    if prompt.len() > model.max_prompt_length() {
        return Err(AttribError::PromptTooLong { len: prompt.len(), max: model.max_prompt_length() });
    }
    prompt.check_vocabulary(model.vocabulary_size())
}

/// Greedy decoding from the masked prompt. Stops after emitting the
/// end-of-sequence token (which is included) or after `max_new_tokens`.
pub fn generate<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    mask: Option<&MaskState>,
    max_new_tokens: usize,
) -> Result<TokenSequence> {
    if max_new_tokens == 0 {
        return Err(AttribError::InvalidArgument("max_new_tokens must be at least 1".into()));
    }
    check_prompt(model, prompt, mask)?;
    let eos = model.eos_token();
    let mut out = Vec::with_capacity(max_new_tokens);
    while out.len() < max_new_tokens {
        let log_probs = model.next_token_log_probs(prompt, mask, &out)?;
        let next = argmax(&log_probs) as u32;
        out.push(next);
        if Some(next) == eos {
            break;
        }
    }
    TokenSequence::new(out, model.vocabulary_size())
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    for z in logits.iter_mut() {
        *z -= log_z;
    }
}

/// Wraps an adapter and counts scoring and gradient calls.
pub struct CountingModel<'a, M: ScoredGenerator + ?Sized> {
    inner: &'a M,
    forward: AtomicU64,
    gradient: AtomicU64,
}

impl<'a, M: ScoredGenerator + ?Sized> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        CountingModel { inner, forward: AtomicU64::new(0), gradient: AtomicU64::new(0) }
    }

    /// Number of `log_likelihood` calls so far.
    pub fn forward_calls(&self) -> u64 {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> u64 {
        self.gradient.load(Ordering::Relaxed)
    }
}

impl<M: ScoredGenerator + ?Sized> ScoredGenerator for CountingModel<'_, M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn vocabulary_size(&self) -> usize {
        self.inner.vocabulary_size()
    }

    fn max_prompt_length(&self) -> usize {
        self.inner.max_prompt_length()
    }

    fn supports_gradient(&self) -> bool {
        self.inner.supports_gradient()
    }

    fn concurrency(&self) -> Concurrency {
        self.inner.concurrency()
    }

    fn eos_token(&self) -> Option<u32> {
        self.inner.eos_token()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        self.inner.tokenize(text)
    }

    fn render_token(&self, id: u32) -> String {
        self.inner.render_token(id)
    }

    fn next_token_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        prefix: &[u32],
    ) -> Result<Vec<f64>> {
        self.inner.next_token_log_probs(prompt, mask, prefix)
    }

    fn teacher_forced_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        target: &TokenSequence,
    ) -> Result<Vec<Vec<f64>>> {
        self.inner.teacher_forced_log_probs(prompt, mask, target)
    }

    fn log_likelihood(&self, prompt: &TokenSequence, mask: Option<&MaskState>, target: &TokenSequence) -> Result<f64> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.log_likelihood(prompt, mask, target)
    }

    fn mask_gradient(&self, prompt: &TokenSequence, target: &TokenSequence, eval_point: &[f64]) -> Result<Vec<f64>> {
        self.gradient.fetch_add(1, Ordering::Relaxed);
        self.inner.mask_gradient(prompt, target, eval_point)
    }
}
