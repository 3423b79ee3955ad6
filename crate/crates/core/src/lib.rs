// SPDX-License-Identifier: MIT OR Apache-2.0

//! Joint prompt attribution for autoregressive language models.
//!
//! Given a prompt `x` and the model's own output `y`, the toolkit searches for
//! the `k` prompt positions whose joint masking most reduces `log p(y | m ⊙ x)`.
//! The search starts from the top-`k` entries of a single mask gradient and
//! then proposes gradient-weighted swaps, accepting only strict decreases of
//! the masked log-likelihood.
//!
//! Modules:
//!
//! - [`model`]: the scored-generator contract and the controlled toy model
//! - [`search`]: the objective, mask search, and exhaustive oracle
//! - [`baselines`]: random-k, leave-one-out, integrated gradients
//! - [`metrics`]: BLEU, ROUGE-L, embedding similarity, probability ratio, KL
//! - [`harness`]: dataset ingestion, experiment grids, ablations, artifacts
//! - [`render`]: ANSI / HTML highlight rendering

pub mod baselines;
pub mod error;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod render;
pub mod search;
pub mod suite;
pub mod tokens;

pub use error::{AttribError, Result};
pub use mask::{GradientGuide, MaskState};
pub use model::{ControlledToyLM, ScoredGenerator, ToyConfig};
pub use search::{AttributionResult, SearchConfig};
pub use tokens::TokenSequence;
