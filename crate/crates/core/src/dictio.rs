//! Bilingual dictionary ingestion.
//!
//! A dictionary is read as an ordered list of entry/definition pairs. The
//! entry is the target-language headword and the definition is its
//! source-language gloss; both may span several words.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use unicode_normalization::UnicodeNormalization;

#[derive(Debug, thiserror::Error)]
pub enum DictError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file is not valid UTF-8 (byte offset {offset})")]
    Utf8 { path: PathBuf, offset: usize },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
    #[error("unknown dictionary format `{0}` (expected `tab` or `space-pair`)")]
    UnknownFormat(String),
}

/// On-disk layout of a dictionary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DictFormat {
    /// `entry<TAB>definition`, split on the first tab.
    #[default]
    Tab,
    /// `entry definition...`, split on the first run of spaces.
    SpacePair,
}

impl DictFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DictFormat::Tab => "tab",
            DictFormat::SpacePair => "space-pair",
        }
    }
}

impl fmt::Display for DictFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DictFormat {
    type Err = DictError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tab" | "tsv" => Ok(DictFormat::Tab),
            "space-pair" | "space" => Ok(DictFormat::SpacePair),
            other => Err(DictError::UnknownFormat(other.to_string())),
        }
    }
}

/// One headword and its gloss. Both fields are non-empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryPair {
    pub entry: String,
    pub definition: String,
}

impl EntryPair {
    /// Builds a pair, trimming both fields. Returns `None` if either side is blank.
    pub fn new(entry: &str, definition: &str) -> Option<Self> {
        let entry = entry.trim();
        let definition = definition.trim();
        if entry.is_empty() || definition.is_empty() {
            return None;
        }
        Some(Self {
            entry: entry.to_string(),
            definition: definition.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceMeta {
    pub format: DictFormat,
    pub origin: Option<PathBuf>,
}

/// Entry/definition pairs in file order. Duplicates are kept.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DictionaryCorpus {
    pub pairs: Vec<EntryPair>,
    pub source_meta: SourceMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub entry_count: usize,
    pub word_count: usize,
}

impl DictionaryCorpus {
    pub fn new(pairs: Vec<EntryPair>) -> Self {
        Self {
            pairs,
            source_meta: SourceMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.entry.as_str())
    }

    pub fn definitions(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.definition.as_str())
    }

    /// Writes the corpus back out as `entry<TAB>definition` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&p.entry);
            out.push('\t');
            out.push_str(&p.definition);
            out.push('\n');
        }
        out
    }
}

pub fn parse_dictionary(path: &Path, format: DictFormat) -> Result<DictionaryCorpus, DictError> {
    let bytes = fs::read(path).map_err(|source| DictError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| DictError::Utf8 {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    let mut corpus = parse_dictionary_str(&text, format)?;
    corpus.source_meta.origin = Some(path.to_path_buf());
    Ok(corpus)
}

/// Parses dictionary text. Line numbers in errors are 1-based.
pub fn parse_dictionary_str(text: &str, format: DictFormat) -> Result<DictionaryCorpus, DictError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let (entry, definition) = match format {
            DictFormat::Tab => line.split_once('\t'),
            DictFormat::SpacePair => split_first_space_run(line.trim_start_matches(' ')),
        }
        .ok_or(DictError::Malformed {
            line: line_no,
            reason: "missing separator",
        })?;
        let pair = EntryPair::new(entry, definition).ok_or(DictError::Malformed {
            line: line_no,
            reason: "empty entry or definition",
        })?;
        pairs.push(pair);
    }
    Ok(DictionaryCorpus {
        pairs,
        source_meta: SourceMeta {
            format,
            origin: None,
        },
    })
}

fn split_first_space_run(line: &str) -> Option<(&str, &str)> {
    let start = line.find(' ')?;
    let rest = line[start..].trim_start_matches(' ');
    Some((&line[..start], rest))
}

/// NFC-normalizes both fields and optionally lowercases them.
pub fn normalize(corpus: &DictionaryCorpus, lowercase: bool) -> DictionaryCorpus {
    let fix = |s: &str| -> String {
        let nfc: String = s.nfc().collect();
        if lowercase {
            nfc.to_lowercase()
        } else {
            nfc
        }
    };
    DictionaryCorpus {
        pairs: corpus
            .pairs
            .iter()
            .map(|p| EntryPair {
                entry: fix(&p.entry),
                definition: fix(&p.definition),
            })
            .collect(),
        source_meta: corpus.source_meta.clone(),
    }
}

/// Counts entries, and whitespace-separated words across the entry side.
pub fn corpus_stats(corpus: &DictionaryCorpus) -> CorpusStats {
    CorpusStats {
        entry_count: corpus.pairs.len(),
        word_count: corpus
            .pairs
            .iter()
            .map(|p| p.entry.split_whitespace().count())
            .sum(),
    }
}
