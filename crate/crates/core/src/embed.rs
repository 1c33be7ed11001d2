//! Target embedding initialization from a subword map.
//!
//! Each target row is, in order of precedence:
//! 1. a copy of the source row for configured special tokens and for
//!    digit/punctuation tokens that exist byte-for-byte in the source vocab;
//! 2. the count-weighted average of the rows of its mapped source types;
//! 3. the source UNK row, or a seeded Gaussian draw moment-matched to the
//!    source matrix when no UNK token is configured.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::bpe::BpeTokenizer;
use crate::mapping::{SourceCounts, SubwordMap};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("source matrix has {rows} rows but the source tokenizer has {vocab} tokens")]
    RowMismatch { rows: usize, vocab: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{what} token {} is not in the source vocabulary", crate::bpe::display_token(bytes))]
    MissingSourceToken { what: &'static str, bytes: Vec<u8> },
    #[error("mapping entry has no sources")]
    EmptyEntry,
    #[error("matrix contains a non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("embedding file: {0}")]
    Format(String),
    #[error("embedding file: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major `rows x dim` matrix; row `i` belongs to token id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self, EmbedError> {
        if data.len() != rows * dim {
            return Err(EmbedError::DimMismatch {
                expected: rows * dim,
                got: data.len(),
            });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    fn check_finite(&self) -> Result<(), EmbedError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(EmbedError::NonFinite { row: p / self.dim.max(1) }),
            None => Ok(()),
        }
    }

    /// Per-dimension mean and population standard deviation.
    pub fn column_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0f64; self.dim];
        let mut sq = vec![0.0f64; self.dim];
        for r in 0..self.rows {
            for (k, &v) in self.row(r).iter().enumerate() {
                mean[k] += v as f64;
                sq[k] += (v as f64) * (v as f64);
            }
        }
        let n = self.rows.max(1) as f64;
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                (s / n - *m * *m).max(0.0).sqrt()
            })
            .collect();
        (mean, std)
    }
}

/// How a target row was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Copied,
    Averaged,
    Unk,
    Random,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Copied => "copied",
            Provenance::Averaged => "averaged",
            Provenance::Unk => "unk",
            Provenance::Random => "random",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitPolicy {
    pub unk_token: Option<Vec<u8>>,
    pub rng_seed: u64,
    pub specials: Vec<Vec<u8>>,
    /// Copy digit and punctuation tokens that also exist in the source vocab.
    pub copy_digits_punct: bool,
}

impl Default for InitPolicy {
    fn default() -> Self {
        Self {
            unk_token: None,
            rng_seed: 42,
            specials: Vec::new(),
            copy_digits_punct: true,
        }
    }
}

/// Relative counts `c(s,t) / sum_x c(x,t)`, ordered by source bytes.
pub fn relative_counts(entry: &SourceCounts) -> Result<Vec<(&[u8], f64)>, EmbedError> {
    let total: u64 = entry.values().sum();
    if entry.is_empty() || total == 0 {
        return Err(EmbedError::EmptyEntry);
    }
    Ok(entry
        .iter()
        .map(|(s, &c)| (s.as_slice(), c as f64 / total as f64))
        .collect())
}

/// True if `bytes` is UTF-8 made only of decimal digits and punctuation.
pub fn is_digit_or_punct(bytes: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(bytes) else {
        return false;
    };
    !s.is_empty()
        && s.chars().all(|c| {
            matches!(
                get_general_category(c),
                GeneralCategory::DecimalNumber
                    | GeneralCategory::ConnectorPunctuation
                    | GeneralCategory::DashPunctuation
                    | GeneralCategory::OpenPunctuation
                    | GeneralCategory::ClosePunctuation
                    | GeneralCategory::InitialPunctuation
                    | GeneralCategory::FinalPunctuation
                    | GeneralCategory::OtherPunctuation
            )
        })
}

/// Initialized target matrix and how each row was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetInit {
    pub matrix: EmbeddingMatrix,
    pub provenance: Vec<Provenance>,
}

impl TargetInit {
    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }
}

enum Plan {
    Copy(usize),
    Average(Vec<(usize, f64)>),
    Unk(usize),
    Random,
}

pub fn init_target_matrix(
    src_emb: &EmbeddingMatrix,
    src_tok: &BpeTokenizer,
    tgt_tok: &BpeTokenizer,
    map: &SubwordMap,
    policy: &InitPolicy,
) -> Result<TargetInit, EmbedError> {
    if src_emb.rows() != src_tok.vocab_size() {
        return Err(EmbedError::RowMismatch {
            rows: src_emb.rows(),
            vocab: src_tok.vocab_size(),
        });
    }
    let src_id = |what: &'static str, bytes: &[u8]| {
        src_tok
            .token_id(bytes)
            .map(|id| id as usize)
            .ok_or_else(|| EmbedError::MissingSourceToken {
                what,
                bytes: bytes.to_vec(),
            })
    };
    for special in &policy.specials {
        src_id("special", special)?;
    }
    let unk = policy
        .unk_token
        .as_deref()
        .map(|u| src_id("unk", u))
        .transpose()?;

    let plans: Vec<Plan> = tgt_tok
        .vocab()
        .iter()
        .map(|t| -> Result<Plan, EmbedError> {
            let is_special = policy.specials.iter().any(|s| s == t);
            if is_special || (policy.copy_digits_punct && is_digit_or_punct(t)) {
                if let Some(id) = src_tok.token_id(t) {
                    return Ok(Plan::Copy(id as usize));
                }
            }
            if let Some(sources) = map.sources(t) {
                let present: SourceCounts = sources
                    .iter()
                    .filter(|(s, _)| src_tok.contains(s))
                    .map(|(s, &c)| (s.clone(), c))
                    .collect();
                if !present.is_empty() {
                    let weights = relative_counts(&present)?
                        .into_iter()
                        .map(|(s, w)| (src_tok.token_id(s).expect("filtered") as usize, w))
                        .collect();
                    return Ok(Plan::Average(weights));
                }
            }
            Ok(match unk {
                Some(id) => Plan::Unk(id),
                None => Plan::Random,
            })
        })
        .collect::<Result<_, _>>()?;

    let dim = src_emb.dim();
    let needs_moments = plans.iter().any(|p| matches!(p, Plan::Random));
    let normals: Vec<Normal<f64>> = if needs_moments {
        let (mean, std) = src_emb.column_moments();
        mean.iter()
            .zip(&std)
            .map(|(&m, &s)| Normal::new(m, s).expect("finite moments"))
            .collect()
    } else {
        Vec::new()
    };

    let mut matrix = EmbeddingMatrix::zeros(tgt_tok.vocab_size(), dim);
    if dim > 0 {
        matrix
            .data
            .par_chunks_mut(dim)
            .zip(plans.par_iter())
            .enumerate()
            .for_each(|(id, (row, plan))| match plan {
                Plan::Copy(s) | Plan::Unk(s) => row.copy_from_slice(src_emb.row(*s)),
                Plan::Average(weights) => {
                    let mut acc = vec![0.0f64; dim];
                    for &(s, w) in weights {
                        for (a, &v) in acc.iter_mut().zip(src_emb.row(s)) {
                            *a += w * v as f64;
                        }
                    }
                    for (r, a) in row.iter_mut().zip(acc) {
                        *r = a as f32;
                    }
                }
                Plan::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
                    rng.set_stream(id as u64);
                    for (r, n) in row.iter_mut().zip(&normals) {
                        *r = n.sample(&mut rng) as f32;
                    }
                }
            });
    }

    let provenance = plans
        .iter()
        .map(|p| match p {
            Plan::Copy(_) => Provenance::Copied,
            Plan::Average(_) => Provenance::Averaged,
            Plan::Unk(_) => Provenance::Unk,
            Plan::Random => Provenance::Random,
        })
        .collect();
    Ok(TargetInit { matrix, provenance })
}

// Binary layout: "DTEM", u16 version, u32 rows, u32 dim, then rows*dim f32,
// all little-endian.

pub const EMBEDDING_MAGIC: &[u8; 4] = b"DTEM";
pub const EMBEDDING_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Text,
}

impl EmbeddingFormat {
    /// `.txt` files are text; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => EmbeddingFormat::Text,
            _ => EmbeddingFormat::Binary,
        }
    }
}

pub fn encode_binary(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbedError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(EmbedError::Format("missing DTEM header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EMBEDDING_VERSION {
        return Err(EmbedError::Format(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| EmbedError::Format("header size overflows".into()))?;
    if body.len() != expected {
        return Err(EmbedError::Format(format!(
            "header declares {rows}x{dim} ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = EmbeddingMatrix { rows, dim, data };
    m.check_finite()?;
    Ok(m)
}

pub fn encode_text(m: &EmbeddingMatrix) -> String {
    let mut out = format!("{} {}\n", m.rows, m.dim);
    for r in 0..m.rows {
        let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn decode_text(text: &str) -> Result<EmbeddingMatrix, EmbedError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| EmbedError::Format("line 1: missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| EmbedError::Format(format!("line 1: bad header: {e}")))?;
    let [rows, dim] = dims[..] else {
        return Err(EmbedError::Format("line 1: expected `vocab_size dim`".into()));
    };
    let mut data = Vec::with_capacity(rows * dim);
    let mut seen = 0;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let values: Vec<f32> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| EmbedError::Format(format!("line {line_no}: {e}")))?;
        if values.len() != dim {
            return Err(EmbedError::Format(format!(
                "line {line_no}: expected {dim} values, found {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Format(format!("line {line_no}: non-finite value")));
        }
        data.extend(values);
        seen += 1;
    }
    if seen != rows {
        return Err(EmbedError::Format(format!("header declares {rows} rows, found {seen}")));
    }
    Ok(EmbeddingMatrix { rows, dim, data })
}

/// Loads either format, sniffing the binary magic.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        return decode_binary(&bytes);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| EmbedError::Format("neither DTEM binary nor UTF-8 text".into()))?;
    decode_text(&text)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: &Path, format: EmbeddingFormat) -> Result<(), EmbedError> {
    m.check_finite()?;
    match format {
        EmbeddingFormat::Binary => fs::write(path, encode_binary(m))?,
        EmbeddingFormat::Text => fs::write(path, encode_text(m))?,
    }
    Ok(())
}

/// Describes the model whose embeddings the target matrix replaces.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceModelMeta {
    pub embeddings: String,
    pub tokenizer: String,
    pub vocab_size: usize,
    pub dim: usize,
}

/// Manifest TSV: a `#` line describing the source model, then one
/// `id<TAB>hex_bytes<TAB>provenance` row per target token.
pub fn manifest(meta: &SourceModelMeta, init: &TargetInit, tgt_tok: &BpeTokenizer) -> Result<String, EmbedError> {
    if init.matrix.rows() != tgt_tok.vocab_size() || init.provenance.len() != tgt_tok.vocab_size() {
        return Err(EmbedError::RowMismatch {
            rows: init.matrix.rows(),
            vocab: tgt_tok.vocab_size(),
        });
    }
    init.matrix.check_finite()?;
    let mut out = format!(
        "# source_embeddings={} source_tokenizer={} source_vocab={} dim={}\n",
        meta.embeddings, meta.tokenizer, meta.vocab_size, meta.dim
    );
    for (id, (bytes, p)) in tgt_tok.vocab().iter().zip(&init.provenance).enumerate() {
        out.push_str(&format!("{id}\t{}\t{p}\n", hex::encode(bytes)));
    }
    Ok(out)
}

/// Writes the target matrix (binary) and its manifest for splicing into the
/// source model by an external training stack.
pub fn replace_embeddings_manifest(
    meta: &SourceModelMeta,
    init: &TargetInit,
    tgt_tok: &BpeTokenizer,
    matrix_path: &Path,
    manifest_path: &Path,
) -> Result<(), EmbedError> {
    let text = manifest(meta, init, tgt_tok)?;
    save_embeddings(&init.matrix, matrix_path, EmbeddingFormat::Binary)?;
    let mut f = fs::File::create(manifest_path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
