//! Byte-level tokenizer. Every UTF-8 byte is one token, so offsets are exact
//! byte ranges into the source string.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Token ids with the byte range of the source text each one came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPrompt {
    pub token_ids: Vec<u32>,
    pub offsets: Vec<Range<usize>>,
}

impl TokenizedPrompt {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

pub fn tokenize(text: &str) -> TokenizedPrompt {
    let bytes = text.as_bytes();
    TokenizedPrompt {
        token_ids: bytes.iter().map(|&b| u32::from(b)).collect(),
        offsets: (0..bytes.len()).map(|i| i..i + 1).collect(),
    }
}

/// Inverse of [`tokenize`]. Ids outside the byte range (special tokens) are
/// skipped; invalid UTF-8 from a model is replaced lossily.
pub fn detokenize(token_ids: &[u32]) -> String {
    let bytes: Vec<u8> = token_ids
        .iter()
        .filter_map(|&t| u8::try_from(t).ok())
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}
