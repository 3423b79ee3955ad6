// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary prompt masks and the gradient guide used to seed and steer the
//! search.

use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};

/// A binary mask over prompt positions. `false` marks a masked (explanatory)
/// position; `k` is the number of masked positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskState {
    bits: Vec<bool>,
    k: usize,
}

impl MaskState {
    pub fn all_ones(len: usize) -> Self {
        MaskState { bits: vec![true; len], k: 0 }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let k = bits.iter().filter(|b| !**b).count();
        MaskState { bits, k }
    }

    /// Mask of length `len` with zeros at exactly `zeros`.
    pub fn from_zeros(len: usize, zeros: &[usize]) -> Result<Self> {
        let mut bits = vec![true; len];
        for &i in zeros {
            if i >= len {
                return Err(AttribError::InvalidArgument(format!("mask index {i} out of range for length {len}")));
            }
            if !bits[i] {
                return Err(AttribError::InvalidArgument(format!("duplicate mask index {i}")));
            }
            bits[i] = false;
        }
        Ok(MaskState { bits, k: zeros.len() })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of masked positions.
    pub fn k(&self) -> usize {
        self.k
    }

    /// `|m|_1`, the number of kept positions.
    pub fn ones(&self) -> usize {
        self.bits.len() - self.k
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Sorted masked positions.
    pub fn zeros(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter_map(|(i, &b)| (!b).then_some(i)).collect()
    }

    pub fn is_all_ones(&self) -> bool {
        self.k == 0
    }

    /// Exchanges the values at `l` (kept) and `v` (masked). Cardinality is
    /// preserved.
    pub fn swap(&mut self, l: usize, v: usize) -> Result<()> {
        if l >= self.len() || v >= self.len() {
            return Err(AttribError::InvalidState(format!(
                "swap indices ({l}, {v}) out of range for length {}",
                self.len()
            )));
        }
        if !self.bits[l] || self.bits[v] {
            return Err(AttribError::InvalidState(format!(
                "swap requires a kept position and a masked position, got ({l}, {v})"
            )));
        }
        self.bits[l] = false;
        self.bits[v] = true;
        Ok(())
    }

    /// The mask as a point of the continuous relaxation.
    pub fn as_weights(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Nonnegative per-position gradient magnitudes with a sampling temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientGuide {
    magnitudes: Vec<f64>,
    temperature: f64,
}

impl GradientGuide {
    pub fn new(magnitudes: Vec<f64>, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(AttribError::InvalidArgument(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        if let Some(g) = magnitudes.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(AttribError::InvalidArgument(format!(
                "gradient magnitudes must be finite and nonnegative, got {g}"
            )));
        }
        Ok(GradientGuide { magnitudes, temperature })
    }

    /// Takes absolute values of a raw gradient.
    pub fn from_gradient(gradient: &[f64], temperature: f64) -> Result<Self> {
        Self::new(gradient.iter().map(|g| g.abs()).collect(), temperature)
    }

    /// Every position weighted equally.
    pub fn uniform(len: usize) -> Self {
        GradientGuide { magnitudes: vec![0.0; len], temperature: 1.0 }
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Indices of the `k` largest magnitudes, ties to the lowest index,
    /// returned sorted.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.magnitudes.len()).collect();
        order.sort_by(|&a, &b| self.magnitudes[b].total_cmp(&self.magnitudes[a]).then(a.cmp(&b)));
        let mut top: Vec<usize> = order.into_iter().take(k).collect();
        top.sort_unstable();
        top
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_zeros_counts_and_rejects_duplicates() {
        let m = MaskState::from_zeros(5, &[3, 1]).unwrap();
        assert_eq!(m.k(), 2);
        assert_eq!(m.ones(), 3);
        assert_eq!(m.zeros(), vec![1, 3]);
        assert!(MaskState::from_zeros(5, &[1, 1]).is_err());
        assert!(MaskState::from_zeros(5, &[5]).is_err());
    }

    #[test]
    fn swap_preserves_cardinality() {
        let mut m = MaskState::from_zeros(4, &[0]).unwrap();
        m.swap(2, 0).unwrap();
        assert_eq!(m.zeros(), vec![2]);
        assert_eq!(m.k(), 1);
        assert!(m.swap(2, 1).is_err());
    }

    #[test]
    fn guide_rejects_negative_and_bad_temperature() {
        assert!(GradientGuide::new(vec![0.1, -0.1], 1.0).is_err());
        assert!(GradientGuide::new(vec![0.1], 0.0).is_err());
        assert!(GradientGuide::new(vec![f64::NAN], 1.0).is_err());
        let g = GradientGuide::from_gradient(&[-2.0, 1.0], 0.5).unwrap();
        assert_eq!(g.magnitudes(), &[2.0, 1.0]);
    }

    #[test]
    fn top_k_breaks_ties_low() {
        let g = GradientGuide::new(vec![0.5, 0.5, 0.9, 0.5], 1.0).unwrap();
        assert_eq!(g.top_k(2), vec![0, 2]);
        assert_eq!(g.top_k(0), Vec::<usize>::new());
    }
}
