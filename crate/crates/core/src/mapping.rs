//! Iterative target-to-source subword mapping.
//!
//! Each loop tokenizes every entry with the current target tokenizer and every
//! definition with the source tokenizer, trains a fresh aligner, and maps the
//! target types that received links and were not mapped before. Those types
//! are then deleted from the target tokenizer so that the next loop sees the
//! shorter pieces they were built from. The loop stops once a pass maps
//! nothing new.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{self, AlignConfig, AlignError, AlignmentLink, ParallelCorpus};
use crate::bpe::{display_token, BpeError, BpeTokenizer};
use crate::dictio::DictionaryCorpus;

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("max_loops must be at least 1")]
    NoLoops,
    #[error("alignment failed in loop {iteration}: {source}")]
    Align {
        iteration: usize,
        #[source]
        source: AlignError,
    },
    #[error("token removal failed in loop {iteration}: {source}")]
    Removal {
        iteration: usize,
        #[source]
        source: BpeError,
    },
    #[error("mapping file: {0}")]
    Format(String),
    #[error("mapping file: {0}")]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_MAX_LOOPS: usize = 20;

#[derive(Debug, Clone)]
pub struct MappingConfig {
    pub align: AlignConfig,
    /// Delete newly mapped target types between loops. With this off a single
    /// loop runs.
    pub removal: bool,
    pub max_loops: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            align: AlignConfig::default(),
            removal: true,
            max_loops: DEFAULT_MAX_LOOPS,
        }
    }
}

/// Source counts for one target type.
pub type SourceCounts = BTreeMap<Vec<u8>, u64>;

/// Cumulative one-to-many map from target types to source types with counts,
/// plus the loop in which each target type was first mapped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubwordMap {
    entries: BTreeMap<Vec<u8>, SourceCounts>,
    mapped_at: BTreeMap<Vec<u8>, usize>,
    iterations: usize,
    truncated: bool,
}

impl SubwordMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, tgt: &[u8]) -> bool {
        self.entries.contains_key(tgt)
    }

    pub fn sources(&self, tgt: &[u8]) -> Option<&SourceCounts> {
        self.entries.get(tgt)
    }

    pub fn mapped_at(&self, tgt: &[u8]) -> Option<usize> {
        self.mapped_at.get(tgt).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &SourceCounts, usize)> {
        self.entries
            .iter()
            .map(|(t, s)| (t.as_slice(), s, self.mapped_at[t]))
    }

    /// Loops run, including the final one that mapped nothing.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether the loop limit was hit while new types were still being mapped.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Adds `new` at `iteration`, summing counts for pairs already present.
    pub fn update(&mut self, new: &BTreeMap<Vec<u8>, SourceCounts>, iteration: usize) {
        for (tgt, sources) in new {
            if sources.is_empty() {
                continue;
            }
            let slot = self.entries.entry(tgt.clone()).or_default();
            for (src, &count) in sources {
                *slot.entry(src.clone()).or_default() += count;
            }
            self.mapped_at.entry(tgt.clone()).or_insert(iteration);
        }
    }

    /// Number of target types first mapped in each loop `1..=iterations`.
    pub fn per_iteration(&self) -> Vec<(usize, usize)> {
        let mut counts = vec![0usize; self.iterations];
        for &it in self.mapped_at.values() {
            if it >= 1 && it <= counts.len() {
                counts[it - 1] += 1;
            }
        }
        counts.into_iter().enumerate().map(|(i, c)| (i + 1, c)).collect()
    }
}

/// What one loop produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationDelta {
    pub iteration: usize,
    pub new_mappings: BTreeMap<Vec<u8>, SourceCounts>,
    pub removed: Vec<Vec<u8>>,
    /// Target types that occurred in this loop's tokenization.
    pub seen_types: BTreeSet<Vec<u8>>,
}

/// Passed to the observer after each loop's alignment.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub corpus: &'a ParallelCorpus,
    pub links: &'a [Vec<AlignmentLink>],
}

#[derive(Debug, Clone)]
pub struct MappingRun {
    pub map: SubwordMap,
    pub deltas: Vec<IterationDelta>,
    pub report: TransferReport,
}

pub fn run_mapping(
    src_tok: &BpeTokenizer,
    tgt_tok: &BpeTokenizer,
    dict: &DictionaryCorpus,
    cfg: &MappingConfig,
) -> Result<MappingRun, MappingError> {
    run_mapping_with(src_tok, tgt_tok, dict, cfg, |_| {})
}

/// Like [`run_mapping`], calling `observe` with each loop's corpus and links.
pub fn run_mapping_with<F>(
    src_tok: &BpeTokenizer,
    tgt_tok: &BpeTokenizer,
    dict: &DictionaryCorpus,
    cfg: &MappingConfig,
    mut observe: F,
) -> Result<MappingRun, MappingError>
where
    F: FnMut(&IterationView<'_>),
{
    if dict.is_empty() {
        return Err(MappingError::EmptyDictionary);
    }
    if cfg.max_loops == 0 {
        return Err(MappingError::NoLoops);
    }

    let src_tokens: Vec<Vec<&[u8]>> = dict
        .pairs
        .par_iter()
        .map(|p| ids_to_bytes(src_tok, &src_tok.encode_words(&p.definition)))
        .collect();

    let mut map = SubwordMap::new();
    let mut deltas = Vec::new();
    let mut current = tgt_tok.clone();
    let loops = if cfg.removal { cfg.max_loops } else { 1 };

    for iteration in 1..=loops {
        let tgt_ids: Vec<Vec<u32>> = dict
            .pairs
            .par_iter()
            .map(|p| current.encode_words(&p.entry))
            .collect();
        let mut corpus = ParallelCorpus::new();
        let mut seen_types = BTreeSet::new();
        for (src, ids) in src_tokens.iter().zip(&tgt_ids) {
            let tgt = ids_to_bytes(&current, ids);
            seen_types.extend(tgt.iter().map(|t| t.to_vec()));
            corpus.push(src, &tgt);
        }
        if corpus.skipped() > 0 {
            log::warn!("loop {iteration}: skipped {} pairs with an empty side", corpus.skipped());
        }

        let model = align::train_schedule(&corpus, &cfg.align)
            .map_err(|source| MappingError::Align { iteration, source })?;
        let links = model.align_corpus(&corpus);
        observe(&IterationView {
            iteration,
            corpus: &corpus,
            links: &links,
        });

        let mut new_mappings: BTreeMap<Vec<u8>, SourceCounts> = BTreeMap::new();
        for ((tgt, src), count) in align::count_links(&corpus, &links) {
            if !map.contains(&tgt) {
                new_mappings.entry(tgt).or_default().insert(src, count);
            }
        }
        map.iterations = iteration;
        map.update(&new_mappings, iteration);
        log::info!("loop {iteration}: {} new target types mapped", new_mappings.len());

        let removed: Vec<Vec<u8>> = if cfg.removal {
            new_mappings.keys().filter(|t| t.len() > 1).cloned().collect()
        } else {
            Vec::new()
        };
        if !removed.is_empty() {
            current = current
                .remove_tokens(&removed)
                .map_err(|source| MappingError::Removal { iteration, source })?;
        }

        let productive = !new_mappings.is_empty();
        deltas.push(IterationDelta {
            iteration,
            new_mappings,
            removed,
            seen_types,
        });
        if !productive {
            break;
        }
        if cfg.removal && iteration == loops {
            map.truncated = true;
        }
    }

    let report = report(&map, tgt_tok.vocab_size());
    Ok(MappingRun { map, deltas, report })
}

fn ids_to_bytes<'a>(tok: &'a BpeTokenizer, ids: &[u32]) -> Vec<&'a [u8]> {
    ids.iter()
        .map(|&id| tok.token_bytes(id).expect("encoder emits known ids"))
        .collect()
}

/// Tokens of `original` that never received a mapping, in id order.
pub fn unmapped_tokens(map: &SubwordMap, original: &BpeTokenizer) -> Vec<Vec<u8>> {
    original
        .vocab()
        .iter()
        .filter(|t| !map.contains(t))
        .cloned()
        .collect()
}

/// Coverage and per-loop summary of a mapping run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub per_iteration: Vec<(usize, usize)>,
    pub vocab_size: usize,
    pub mapped_total: usize,
    pub coverage: f64,
    pub truncated: bool,
}

pub fn report(map: &SubwordMap, vocab_size: usize) -> TransferReport {
    let mapped_total = map.len();
    TransferReport {
        per_iteration: map.per_iteration(),
        vocab_size,
        mapped_total,
        coverage: if vocab_size == 0 {
            0.0
        } else {
            mapped_total as f64 / vocab_size as f64
        },
        truncated: map.truncated(),
    }
}

impl TransferReport {
    pub fn coverage_percent(&self) -> String {
        format!("{:.2} %", self.coverage * 100.0)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("vocab size", self.vocab_size.to_string()),
            ("mapped tokens", format!("{} ({})", self.mapped_total, self.coverage_percent())),
            (
                "unmapped tokens",
                self.vocab_size.saturating_sub(self.mapped_total).to_string(),
            ),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<16} {v}");
        }
        if self.truncated {
            out.push_str("warning: loop limit reached before convergence\n");
        }
        out.push('\n');
        let _ = writeln!(out, "{:>9}  {:>10}", "iteration", "new mapped");
        for (it, n) in &self.per_iteration {
            let _ = writeln!(out, "{it:>9}  {n:>10}");
        }
        out
    }
}

// Mapping file: JSON listing every mapped target token (hex + printable),
// its sources with counts, and the loop it was mapped in.

pub const MAPPING_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    version: u32,
    vocab_size: usize,
    iterations: usize,
    truncated: bool,
    entries: Vec<MappingEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingEntry {
    token: String,
    text: String,
    iteration: usize,
    sources: Vec<SourceEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceEntry {
    token: String,
    text: String,
    count: u64,
}

/// Renders the mapping file for `map` over a target vocabulary of `vocab_size`.
pub fn to_mapping_file(map: &SubwordMap, vocab_size: usize) -> String {
    let file = MappingFile {
        version: MAPPING_FILE_VERSION,
        vocab_size,
        iterations: map.iterations,
        truncated: map.truncated,
        entries: map
            .iter()
            .map(|(tgt, sources, iteration)| MappingEntry {
                token: hex::encode(tgt),
                text: display_token(tgt),
                iteration,
                sources: sources
                    .iter()
                    .map(|(s, &count)| SourceEntry {
                        token: hex::encode(s),
                        text: display_token(s),
                        count,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("mapping serializes");
    text.push('\n');
    text
}

/// Parses a mapping file, returning the map and the target vocab size. A
/// blank file is an empty mapping.
pub fn from_mapping_file(text: &str) -> Result<(SubwordMap, usize), MappingError> {
    if text.trim().is_empty() {
        return Ok((SubwordMap::new(), 0));
    }
    let file: MappingFile = serde_json::from_str(text).map_err(|e| {
        MappingError::Format(format!(
            "byte offset {} (line {} column {}): {e}",
            byte_offset(text, e.line(), e.column()),
            e.line(),
            e.column()
        ))
    })?;
    if file.version != MAPPING_FILE_VERSION {
        return Err(MappingError::Format(format!("unsupported version {}", file.version)));
    }
    let mut map = SubwordMap {
        iterations: file.iterations,
        truncated: file.truncated,
        ..SubwordMap::default()
    };
    let mut seen = HashSet::new();
    for (k, entry) in file.entries.into_iter().enumerate() {
        let tgt = hex::decode(&entry.token)
            .map_err(|e| MappingError::Format(format!("entries[{k}].token: {e}")))?;
        if !seen.insert(tgt.clone()) {
            return Err(MappingError::Format(format!("entries[{k}]: duplicate token {}", entry.token)));
        }
        if entry.iteration == 0 || entry.iteration > file.iterations {
            return Err(MappingError::Format(format!(
                "entries[{k}]: iteration {} outside 1..={}",
                entry.iteration, file.iterations
            )));
        }
        if entry.sources.is_empty() {
            return Err(MappingError::Format(format!("entries[{k}]: no sources")));
        }
        let mut sources = SourceCounts::new();
        for (q, s) in entry.sources.into_iter().enumerate() {
            let bytes = hex::decode(&s.token)
                .map_err(|e| MappingError::Format(format!("entries[{k}].sources[{q}].token: {e}")))?;
            if s.count == 0 {
                return Err(MappingError::Format(format!("entries[{k}].sources[{q}]: zero count")));
            }
            sources.insert(bytes, s.count);
        }
        map.mapped_at.insert(tgt.clone(), entry.iteration);
        map.entries.insert(tgt, sources);
    }
    Ok((map, file.vocab_size))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub fn save_mapping(path: &Path, map: &SubwordMap, vocab_size: usize) -> Result<(), MappingError> {
    fs::write(path, to_mapping_file(map, vocab_size))?;
    Ok(())
}

pub fn load_mapping(path: &Path) -> Result<(SubwordMap, usize), MappingError> {
    from_mapping_file(&fs::read_to_string(path)?)
}
