//! Tokenizer file format.
//!
//! A JSON document with `version`, `vocab` (hex-encoded token bytes, index =
//! id) and `merges` (`[left_hex, right_hex]` pairs in rank order). Token
//! bytes are stored as hex rather than through a printable byte-to-char
//! table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{BpeError, BpeTokenizer};

pub const TOKENIZER_FILE_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenizerFile {
    version: u32,
    vocab: Vec<String>,
    merges: Vec<(String, String)>,
}

impl BpeTokenizer {
    /// Renders the tokenizer file. Output is byte-stable: parsing it and
    /// rendering again yields the same text.
    pub fn to_file_string(&self) -> String {
        let mut out = String::with_capacity(self.vocab.len() * 16 + self.merges.len() * 24);
        let _ = write!(out, "{{\n  \"version\": {TOKENIZER_FILE_VERSION},\n  \"vocab\": [");
        for (i, bytes) in self.vocab.iter().enumerate() {
            out.push_str(if i == 0 { "\n    \"" } else { ",\n    \"" });
            out.push_str(&hex::encode(bytes));
            out.push('"');
        }
        out.push_str(if self.vocab.is_empty() { "],\n" } else { "\n  ],\n" });
        out.push_str("  \"merges\": [");
        for (i, (left, right)) in self.merge_pairs().enumerate() {
            out.push_str(if i == 0 { "\n    [\"" } else { ",\n    [\"" });
            out.push_str(&hex::encode(left));
            out.push_str("\", \"");
            out.push_str(&hex::encode(right));
            out.push_str("\"]");
        }
        out.push_str(if self.merges.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self, BpeError> {
        let file: TokenizerFile = serde_json::from_str(text).map_err(|e| {
            BpeError::Format(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        if file.version != TOKENIZER_FILE_VERSION {
            return Err(BpeError::Format(format!(
                "unsupported version {} (expected {TOKENIZER_FILE_VERSION})",
                file.version
            )));
        }
        let decode = |what: &str, i: usize, s: &str| {
            hex::decode(s).map_err(|e| BpeError::Format(format!("{what}[{i}]: bad hex `{s}`: {e}")))
        };
        let vocab = file
            .vocab
            .iter()
            .enumerate()
            .map(|(i, s)| decode("vocab", i, s))
            .collect::<Result<Vec<_>, _>>()?;
        let merges = file
            .merges
            .iter()
            .enumerate()
            .map(|(i, (l, r))| Ok((decode("merges", i, l)?, decode("merges", i, r)?)))
            .collect::<Result<Vec<_>, BpeError>>()?;
        BpeTokenizer::from_parts(vocab, merges)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_file_string())
    }

    pub fn load(path: &Path) -> Result<Self, BpeError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BpeError::Format(format!("{}: {e}", path.display())))?;
        Self::from_file_str(&text)
    }
}
