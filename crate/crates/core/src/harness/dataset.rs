// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};
use crate::model::{generate, ScoredGenerator};
use crate::tokens::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub id: String,
    pub prompt_text: String,
    pub prompt_tokens: TokenSequence,
    /// The model's own greedy output for the full prompt, frozen at ingest.
    pub target_tokens: TokenSequence,
}

impl PromptInstance {
    /// Builds an instance with a frozen greedy target.
    pub fn from_text(
        model: &dyn ScoredGenerator,
        id: impl Into<String>,
        prompt_text: impl Into<String>,
        max_new_tokens: usize,
    ) -> Result<Self> {
        let prompt_text = prompt_text.into();
        let ids = model.tokenize(&prompt_text)?;
        let prompt_tokens = TokenSequence::new(ids, model.vocabulary_size())?;
        let target_tokens = generate(model, &prompt_tokens, None, max_new_tokens)?;
        Ok(PromptInstance { id: id.into(), prompt_text, prompt_tokens, target_tokens })
    }

    /// Display labels for the prompt tokens: the whitespace words when they
    /// line up one-to-one with tokens, rendered ids otherwise.
    pub fn token_labels(&self, model: &dyn ScoredGenerator) -> Vec<String> {
        let words: Vec<&str> = self.prompt_text.split_whitespace().collect();
        if words.len() == self.prompt_tokens.len() {
            words.into_iter().map(String::from).collect()
        } else {
            self.prompt_tokens.iter().map(|&t| model.render_token(t)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub min_prompt_length: usize,
    pub max_new_tokens: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { min_prompt_length: 15, max_new_tokens: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<PromptInstance>,
    pub skipped_short: usize,
    pub skipped_long: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: String,
    prompt: String,
    #[serde(default)]
    target: Option<RawTarget>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTarget {
    Ids(Vec<u32>),
    Text(String),
}

/// Reads a JSONL dataset: one `{"id", "prompt", "target"?}` object per line.
/// `target` may be token ids or text; when absent the model's greedy output
/// is frozen as the target.
pub fn ingest(path: &Path, model: &dyn ScoredGenerator, options: IngestOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| AttribError::io(path, e))?;
    ingest_reader(BufReader::new(file), path, model, options)
}

pub fn ingest_reader<R: BufRead>(
    reader: R,
    path: &Path,
    model: &dyn ScoredGenerator,
    options: IngestOptions,
) -> Result<Dataset> {
    let malformed =
        |line: usize, message: String| AttribError::MalformedLine { path: path.to_path_buf(), line, message };
    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    let mut skipped_short = 0;
    let mut skipped_long = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| AttribError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        if !ids.insert(raw.id.clone()) {
            return Err(malformed(lineno, format!("duplicate id '{}'", raw.id)));
        }
        let prompt_ids = model.tokenize(&raw.prompt)?;
        if prompt_ids.len() < options.min_prompt_length.max(1) {
            skipped_short += 1;
            continue;
        }
        if prompt_ids.len() > model.max_prompt_length() {
            skipped_long += 1;
            continue;
        }
        let prompt_tokens =
            TokenSequence::new(prompt_ids, model.vocabulary_size()).map_err(|e| malformed(lineno, e.to_string()))?;
        let target_tokens = match raw.target {
            None => generate(model, &prompt_tokens, None, options.max_new_tokens)?,
            Some(RawTarget::Ids(ids)) => {
                TokenSequence::new(ids, model.vocabulary_size()).map_err(|e| malformed(lineno, e.to_string()))?
            }
            Some(RawTarget::Text(text)) => TokenSequence::new(model.tokenize(&text)?, model.vocabulary_size())
                .map_err(|e| malformed(lineno, e.to_string()))?,
        };
        instances.push(PromptInstance { id: raw.id, prompt_text: raw.prompt, prompt_tokens, target_tokens });
    }
    if skipped_short + skipped_long > 0 {
        log::info!(
            "{}: skipped {skipped_short} prompts below {} tokens and {skipped_long} above {}",
            path.display(),
            options.min_prompt_length,
            model.max_prompt_length()
        );
    }
    if instances.is_empty() {
        return Err(AttribError::EmptyDataset(path.to_path_buf()));
    }
    Ok(Dataset { instances, skipped_short, skipped_long })
}
