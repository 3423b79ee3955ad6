// SPDX-License-Identifier: MIT OR Apache-2.0

//! Faithfulness metrics comparing the original output `y` with the output
//! `y'` regenerated from the masked prompt, plus likelihood shifts of `y`.
//! Word-level metrics operate on token-id sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};
use crate::mask::MaskState;
use crate::model::ScoredGenerator;
use crate::tokens::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: f64,
    pub rouge_l_precision: f64,
    pub rouge_l_recall: f64,
    pub rouge_l_f1: f64,
    /// Absent when the sentence encoder failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_similarity: Option<f64>,
    pub pr: f64,
    pub kl: f64,
}

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Unsmoothed BLEU: geometric mean of clipped n-gram precisions for
/// `n = 1..=min(max_n, |candidate|)` times the brevity penalty.
pub fn bleu(candidate: &[u32], reference: &[u32], max_n: usize) -> f64 {
    let max_n = max_n.min(candidate.len());
    if max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        let clipped: usize = cand.iter().map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    brevity * (log_sum / max_n as f64).exp()
}

pub fn lcs_len(a: &[u32], b: &[u32]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            row[j + 1] = if x == y { prev[j] + 1 } else { row[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// ROUGE-L `(precision, recall, f1)` from the longest common subsequence.
pub fn rouge_l(candidate: &[u32], reference: &[u32]) -> (f64, f64, f64) {
    if candidate.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let l = lcs_len(candidate, reference) as f64;
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Maps a token sequence to a fixed-length vector.
pub trait SentenceEncoder: Send + Sync {
    fn embedding_dim(&self) -> usize;

    fn encode(&self, tokens: &[u32]) -> Result<Vec<f64>>;
}

/// Token count vector over the vocabulary.
#[derive(Debug, Clone)]
pub struct BagOfWordsEncoder {
    vocabulary_size: usize,
}

impl BagOfWordsEncoder {
    pub fn new(vocabulary_size: usize) -> Self {
        BagOfWordsEncoder { vocabulary_size }
    }
}

impl SentenceEncoder for BagOfWordsEncoder {
    fn embedding_dim(&self) -> usize {
        self.vocabulary_size
    }

    fn encode(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let mut counts = vec![0.0; self.vocabulary_size];
        for &t in tokens {
            let slot = counts
                .get_mut(t as usize)
                .ok_or(AttribError::TokenOutOfRange { id: t, vocabulary_size: self.vocabulary_size })?;
            *slot += 1.0;
        }
        Ok(counts)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn embedding_similarity(encoder: &dyn SentenceEncoder, a: &[u32], b: &[u32]) -> Result<f64> {
    let ea = encoder.encode(a).map_err(|e| AttribError::MetricUnavailable(e.to_string()))?;
    let eb = encoder.encode(b).map_err(|e| AttribError::MetricUnavailable(e.to_string()))?;
    if ea.len() != encoder.embedding_dim() || eb.len() != encoder.embedding_dim() {
        return Err(AttribError::MetricUnavailable("encoder returned wrong dimension".into()));
    }
    let value = cosine(&ea, &eb);
    // Exact 1 for identical texts instead of a rounded cosine.
    if a == b && value != 0.0 {
        return Ok(1.0);
    }
    Ok(value)
}

/// `p(y | m ⊙ x) / p(y | x)`, exponentiated once from log space.
pub fn probability_ratio<M: ScoredGenerator + ?Sized>(
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
    Ok((masked - full).exp())
}

/// Mean over target positions of `KL(p(· | m ⊙ x, y_<j) ‖ p(· | x, y_<j))`
/// under teacher forcing on `y`.
pub fn sequence_kl<M: ScoredGenerator + ?Sized>(
    model: &M,
    prompt: &TokenSequence,
    target: &TokenSequence,
    mask: &MaskState,
) -> Result<f64> {
    if mask.len() != prompt.len() {
        return Err(AttribError::LengthMismatch { prompt: prompt.len(), mask: mask.len() });
    }
    let full = model.teacher_forced_log_probs(prompt, None, target)?;
    let masked = model.teacher_forced_log_probs(prompt, Some(mask), target)?;
    let total: f64 = masked.iter().zip(&full).map(|(q, p)| categorical_kl(q, p)).sum();
    Ok(total / target.len() as f64)
}

/// `KL(q ‖ p)` for log-probability vectors, clamped at 0.
pub fn categorical_kl(log_q: &[f64], log_p: &[f64]) -> f64 {
    let kl: f64 = log_q
        .iter()
        .zip(log_p)
        .map(|(lq, lp)| {
            let q = lq.exp();
            if q == 0.0 {
                0.0
            } else {
                q * (lq - lp)
            }
        })
        .sum();
    kl.max(0.0)
}

/// Full report for one (prompt, mask) pair given the frozen output and the
/// regenerated output.
pub fn evaluate_mask<M: ScoredGenerator + ?Sized>(
    model: &M,
    encoder: &dyn SentenceEncoder,
    prompt: &TokenSequence,
    target: &TokenSequence,
    regenerated: &[u32],
    mask: &MaskState,
) -> Result<MetricsReport> {
    let (p, r, f1) = rouge_l(regenerated, target);
    let embedding_similarity = match embedding_similarity(encoder, regenerated, target) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("embedding similarity omitted: {e}");
            None
        }
    };
    Ok(MetricsReport {
        bleu: bleu(regenerated, target, 4),
        rouge_l_precision: p,
        rouge_l_recall: r,
        rouge_l_f1: f1,
        embedding_similarity,
        pr: probability_ratio(model, prompt, target, mask)?,
        kl: sequence_kl(model, prompt, target, mask)?,
    })
}
