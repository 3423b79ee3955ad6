// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};

/// A non-empty sequence of token ids, each below the vocabulary bound it was
/// validated against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    pub fn new(ids: Vec<u32>, vocabulary_size: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(AttribError::EmptySequence);
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocabulary_size) {
            return Err(AttribError::TokenOutOfRange { id, vocabulary_size });
        }
        Ok(TokenSequence(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.0
    }

    /// Re-validates the sequence against another vocabulary bound.
    pub fn check_vocabulary(&self, vocabulary_size: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id as usize >= vocabulary_size) {
            Some(&id) => Err(AttribError::TokenOutOfRange { id, vocabulary_size }),
            None => Ok(()),
        }
    }
}

impl Deref for TokenSequence {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(matches!(TokenSequence::new(vec![], 10), Err(AttribError::EmptySequence)));
        assert!(matches!(TokenSequence::new(vec![1, 10], 10), Err(AttribError::TokenOutOfRange { id: 10, .. })));
        let seq = TokenSequence::new(vec![0, 9], 10).unwrap();
        assert_eq!(seq.len(), 2);
        assert!(seq.check_vocabulary(5).is_err());
    }
}
