// SPDX-License-Identifier: MIT OR Apache-2.0

//! Comparison methods: random positions, leave-one-out occlusion, and
//! integrated gradients over the mask relaxation.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};
use crate::mask::{GradientGuide, MaskState};
use crate::model::{CountingModel, ScoredGenerator};
use crate::search::AttributionResult;
use crate::tokens::TokenSequence;

pub const DEFAULT_IG_STEPS: usize = 32;

/// Per-position attribution scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScoreVector {
    pub method: String,
    pub scores: Vec<f64>,
    pub gradient_calls: u64,
    pub forward_calls: u64,
}

impl TokenScoreVector {
    /// Sorted positions of the `k` highest scores, ties to the lowest index.
    pub fn top_k(&self, k: usize) -> Result<Vec<usize>> {
        let len = self.scores.len();
        if k == 0 || k >= len {
            return Err(AttribError::InvalidCardinality { k, len });
        }
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        let mut top: Vec<usize> = order.into_iter().take(k).collect();
        top.sort_unstable();
        Ok(top)
    }

    pub fn into_attribution(self, k: usize, seed: u64) -> Result<AttributionResult> {
        let indices = self.top_k(k)?;
        Ok(AttributionResult {
            id: String::new(),
            method: self.method,
            k,
            indices,
            trace: Vec::new(),
            gradient_calls: self.gradient_calls,
            forward_calls: self.forward_calls,
            seed,
        })
    }
}

/// `k` distinct positions drawn uniformly without replacement.
pub fn random_k(prompt_len: usize, k: usize, seed: u64) -> Result<AttributionResult> {
    if k == 0 || k >= prompt_len {
        return Err(AttribError::InvalidCardinality { k, len: prompt_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, prompt_len, k).into_vec();
    indices.sort_unstable();
    Ok(AttributionResult {
        id: String::new(),
        method: "random".into(),
        k,
        indices,
        trace: Vec::new(),
        gradient_calls: 0,
        forward_calls: 0,
        seed,
    })
}

/// `scores[i] = log p(y | x) - log p(y | x with position i masked)`, using
/// exactly `T + 1` scoring calls.
pub fn leave_one_out<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
) -> Result<TokenScoreVector> {
    let len = prompt.len();
    if len < 2 {
        return Err(AttribError::InvalidArgument("leave-one-out needs a prompt of at least two tokens".into()));
    }
    let counted = CountingModel::new(model);
    let full = counted.log_likelihood(prompt, None, target)?;
    let scores = (0..len)
        .map(|i| {
            let mask = MaskState::from_zeros(len, &[i])?;
            Ok(full - counted.log_likelihood(prompt, Some(&mask), target)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TokenScoreVector {
        method: "loo".into(),
        scores,
        gradient_calls: counted.gradient_calls(),
        forward_calls: counted.forward_calls(),
    })
}

/// Right Riemann sum of the mask gradient along the straight path from the
/// all-zero mask to the all-ones mask; scores are absolute values.
pub fn integrated_gradients<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    steps: usize,
) -> Result<TokenScoreVector> {
    if !model.supports_gradient() {
        return Err(AttribError::UnsupportedCapability("mask gradients"));
    }
    if steps == 0 {
        return Err(AttribError::InvalidArgument("steps must be at least 1".into()));
    }
    let len = prompt.len();
    let counted = CountingModel::new(model);
    let mut sum = vec![0.0; len];
    for s in 1..=steps {
        let alpha = s as f64 / steps as f64;
        let grad = counted.mask_gradient(prompt, target, &vec![alpha; len])?;
        for (acc, g) in sum.iter_mut().zip(grad) {
            *acc += g;
        }
    }
    let scale = 1.0 / steps as f64;
    Ok(TokenScoreVector {
        method: "ig".into(),
        scores: sum.into_iter().map(|v| (v * scale).abs()).collect(),
        gradient_calls: counted.gradient_calls(),
        forward_calls: counted.forward_calls(),
    })
}

/// Plain gradient magnitudes at `m = 1`, used as the search guide.
pub fn gradient_guide<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    temperature: f64,
) -> Result<GradientGuide> {
    let gradient = model.mask_gradient(prompt, target, &vec![1.0; prompt.len()])?;
    GradientGuide::from_gradient(&gradient, temperature)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_k_bounds_and_determinism() {
        assert!(matches!(random_k(5, 5, 1), Err(AttribError::InvalidCardinality { k: 5, len: 5 })));
        assert!(random_k(5, 0, 1).is_err());
        let a = random_k(20, 4, 77).unwrap();
        let b = random_k(20, 4, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices.len(), 4);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn top_k_ties_to_lowest_index() {
        let scores = TokenScoreVector {
            method: "loo".into(),
            scores: vec![0.0, 2.0, 0.0, 2.0, 1.0],
            gradient_calls: 0,
            forward_calls: 6,
        };
        assert_eq!(scores.top_k(2).unwrap(), vec![1, 3]);
        assert_eq!(scores.top_k(3).unwrap(), vec![1, 3, 4]);
        let all_zero = TokenScoreVector { scores: vec![0.0; 4], ..scores };
        assert_eq!(all_zero.top_k(2).unwrap(), vec![0, 1]);
    }
}
