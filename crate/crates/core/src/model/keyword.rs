// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::toy::{word_token, EOS_TOKEN};
use super::{check_prompt, log_softmax_in_place, ScoredGenerator};
use crate::error::{AttribError, Result};
use crate::mask::MaskState;
use crate::tokens::TokenSequence;

/// A gradient-free toy model whose output depends only on which of a few
/// trigger tokens survive masking. Each trigger present in the kept prompt
/// adds a fixed shift to every next-token logit vector.
#[derive(Debug, Clone)]
pub struct KeywordToyLM {
    vocabulary_size: usize,
    max_prompt_length: usize,
    triggers: Vec<u32>,
    /// `(vocab + 1) × vocab`; the last row is the start context.
    transition: Vec<f64>,
    /// `triggers × vocab`.
    shifts: Vec<f64>,
}

impl KeywordToyLM {
    pub fn new(vocabulary_size: usize, max_prompt_length: usize, triggers: usize, seed: u64) -> Result<Self> {
        if vocabulary_size < 2 || triggers >= vocabulary_size {
            return Err(AttribError::InvalidArgument(format!(
                "need 2 <= vocabulary and triggers < vocabulary, got {vocabulary_size} / {triggers}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: Vec<u32> =
            sample(&mut rng, vocabulary_size - 1, triggers).into_iter().map(|i| i as u32 + 1).collect();
        chosen.sort_unstable();
        let mut normal = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
        };
        let transition = normal((vocabulary_size + 1) * vocabulary_size, 1.0);
        let shifts = normal(triggers * vocabulary_size, 3.0);
        Ok(KeywordToyLM { vocabulary_size, max_prompt_length, triggers: chosen, transition, shifts })
    }

    pub fn triggers(&self) -> &[u32] {
        &self.triggers
    }
}

impl ScoredGenerator for KeywordToyLM {
    fn name(&self) -> &str {
        "toy-keyword"
    }

    fn vocabulary_size(&self) -> usize {
        self.vocabulary_size
    }

    fn max_prompt_length(&self) -> usize {
        self.max_prompt_length
    }

    fn eos_token(&self) -> Option<u32> {
        Some(EOS_TOKEN)
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(text.split_whitespace().map(|w| word_token(w, self.vocabulary_size)).collect())
    }

    fn next_token_log_probs(
        &self,
        prompt: &TokenSequence,
        mask: Option<&MaskState>,
        prefix: &[u32],
    ) -> Result<Vec<f64>> {
        check_prompt(self, prompt, mask)?;
        let v = self.vocabulary_size;
        let row = match prefix.last() {
            Some(&t) if (t as usize) < v => t as usize,
            Some(&t) => return Err(AttribError::TokenOutOfRange { id: t, vocabulary_size: v }),
            None => v,
        };
        let mut logits = self.transition[row * v..(row + 1) * v].to_vec();
        for (slot, trigger) in self.triggers.iter().enumerate() {
            let present = prompt.iter().enumerate().any(|(i, t)| t == trigger && mask.is_none_or(|m| m.is_kept(i)));
            if present {
                for (z, s) in logits.iter_mut().zip(&self.shifts[slot * v..(slot + 1) * v]) {
                    *z += s;
                }
            }
        }
        log_softmax_in_place(&mut logits);
        Ok(logits)
    }
}
