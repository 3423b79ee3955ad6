// SPDX-License-Identifier: MIT OR Apache-2.0

//! Standalone re-implementation of the toy forward pass, written against the
//! raw parameters only. Used as the oracle for the model's own scoring.

#![allow(dead_code)]

use xattrib::model::ControlledToyLM;
use xattrib::suite::planted_instance;
use xattrib::{MaskState, TokenSequence};

pub struct Scripted<'a> {
    pub model: &'a ControlledToyLM,
}

impl Scripted<'_> {
    fn row<'v>(&self, table: &'v [f64], id: u32) -> &'v [f64] {
        let d = self.model.config().embedding_dim;
        &table[id as usize * d..(id as usize + 1) * d]
    }

    fn gate(m: &[f64]) -> f64 {
        // Discrete truth table of "any member kept", extended smoothly.
        if m.len() == 1 {
            return m[0];
        }
        let mut all_off = 1.0;
        let mut all_on = 1.0;
        let mut off_total = 0.0;
        for &v in m {
            all_off *= 1.0 - v;
            all_on *= v;
            off_total += 1.0 - v;
        }
        1.0 - all_off - all_on * off_total
    }

    /// Prompt summary with token `i` scaled by `point[i]`.
    pub fn hidden(&self, prompt: &[u32], point: &[f64]) -> Vec<f64> {
        let cfg = self.model.config();
        let p = self.model.parameters();
        let d = cfg.embedding_dim;
        let t = prompt.len();
        let grouped: Vec<usize> = cfg.redundancy_groups.iter().flat_map(|g| g.positions.clone()).collect();
        let mut h = vec![0.0; d];
        for i in 0..t {
            if grouped.contains(&i) {
                continue;
            }
            let w = cfg.influence_weights.get(i).copied().unwrap_or(0.0);
            let e = self.row(&p.embed, prompt[i]);
            for c in 0..d {
                h[c] += w * point[i] * e[c];
            }
        }
        for g in &cfg.redundancy_groups {
            let members: Vec<usize> = g.positions.iter().copied().filter(|&q| q < t).collect();
            if members.is_empty() {
                continue;
            }
            let values: Vec<f64> = members.iter().map(|&q| point[q]).collect();
            let gate = Self::gate(&values);
            for (c, hc) in h.iter_mut().enumerate().take(d) {
                let pooled =
                    members.iter().map(|&q| self.row(&p.embed, prompt[q])[c]).fold(f64::NEG_INFINITY, f64::max);
                *hc += g.weight * gate * pooled;
            }
        }
        h.iter().map(|v| v / t as f64).collect()
    }

    pub fn next_log_probs(&self, hidden: &[f64], previous: Option<u32>) -> Vec<f64> {
        let cfg = self.model.config();
        let p = self.model.parameters();
        let d = cfg.embedding_dim;
        let context = match previous {
            None => p.start.as_slice(),
            Some(y) => self.row(&p.prev, y),
        };
        let act: Vec<f64> = (0..d).map(|c| (hidden[c] + context[c]).tanh()).collect();
        let logits: Vec<f64> = (0..cfg.vocabulary_size)
            .map(|v| {
                let r = self.row(&p.readout, v as u32);
                p.bias[v] + (0..d).map(|c| r[c] * act[c]).sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        logits.iter().map(|l| l - max - z.ln()).collect()
    }

    pub fn teacher_forced(&self, prompt: &[u32], point: &[f64], target: &[u32]) -> Vec<Vec<f64>> {
        let h = self.hidden(prompt, point);
        (0..target.len()).map(|j| self.next_log_probs(&h, if j == 0 { None } else { Some(target[j - 1]) })).collect()
    }

    pub fn log_likelihood(&self, prompt: &[u32], point: &[f64], target: &[u32]) -> f64 {
        self.teacher_forced(prompt, point, target).iter().zip(target).map(|(dist, &y)| dist[y as usize]).sum()
    }

    pub fn greedy(&self, prompt: &[u32], point: &[f64], steps: usize) -> Vec<u32> {
        let h = self.hidden(prompt, point);
        let mut out: Vec<u32> = Vec::new();
        for _ in 0..steps {
            let dist = self.next_log_probs(&h, out.last().copied());
            let mut best = 0;
            for v in 1..dist.len() {
                if dist[v] > dist[best] {
                    best = v;
                }
            }
            out.push(best as u32);
            if best == 0 {
                break;
            }
        }
        out
    }
}

pub fn weights(mask: &MaskState) -> Vec<f64> {
    mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

/// The fixed seed-7 instance used by several oracle tests: T = 8, |y| = 4.
pub fn seed7() -> (ControlledToyLM, TokenSequence, TokenSequence) {
    let inst = planted_instance(7, 8, 4).expect("seed-7 instance");
    (inst.model, inst.prompt, inst.target)
}

/// All `C(n, k)` index subsets in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}
