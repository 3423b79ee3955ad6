// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-highlight renderings of an explanation.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{AttribError, Result};
use crate::search::AttributionResult;

pub const ANSI_MARK_START: &str = "\x1b[1;30;43m";
pub const ANSI_MARK_END: &str = "\x1b[0m";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedToken {
    pub text: String,
    pub explanatory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightRendering {
    pub tokens: Vec<HighlightedToken>,
    pub output_text: String,
    pub method: String,
    pub k: usize,
}

impl HighlightRendering {
    pub fn new(prompt_tokens: Vec<String>, output_text: String, result: &AttributionResult) -> Result<Self> {
        if let Some(&i) = result.indices.iter().find(|&&i| i >= prompt_tokens.len()) {
            return Err(AttribError::InvalidArgument(format!(
                "explanatory index {i} beyond prompt of {} tokens",
                prompt_tokens.len()
            )));
        }
        let tokens = prompt_tokens
            .into_iter()
            .enumerate()
            .map(|(i, text)| HighlightedToken { text, explanatory: result.indices.binary_search(&i).is_ok() })
            .collect();
        Ok(HighlightRendering { tokens, output_text, method: result.method.clone(), k: result.k })
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.tokens.iter().enumerate().filter_map(|(i, t)| t.explanatory.then_some(i)).collect()
    }

    pub fn to_ansi(&self) -> String {
        let mut out = format!("[{} k={}]\n", self.method, self.k);
        let words: Vec<String> = self
            .tokens
            .iter()
            .map(|t| if t.explanatory { format!("{ANSI_MARK_START}{}{ANSI_MARK_END}", t.text) } else { t.text.clone() })
            .collect();
        out.push_str(&words.join(" "));
        out.push_str("\n=> ");
        out.push_str(&self.output_text);
        out.push('\n');
        out
    }

    /// Self-contained HTML page with inline styling.
    pub fn to_html(&self) -> String {
        let mut body = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                body.push(' ');
            }
            if t.explanatory {
                let _ = write!(body, "<span class=\"xp\">{}</span>", escape_html(&t.text));
            } else {
                body.push_str(&escape_html(&t.text));
            }
        }
        format!(
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{method} k={k}</title>\n\
             <style>body{{font-family:sans-serif;max-width:48em;margin:2em auto}}\
             .xp{{background:#ffd54f;font-weight:bold;padding:0 2px;border-radius:3px}}\
             .out{{color:#444;margin-top:1em}}</style></head>\n\
             <body><h3>{method} (k={k})</h3>\n<p class=\"prompt\">{body}</p>\n\
             <p class=\"out\">{out}</p>\n</body></html>\n",
            method = escape_html(&self.method),
            k = self.k,
            body = body,
            out = escape_html(&self.output_text),
        )
    }
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
