//! Subword alignment between tokenized entries and definitions.
//!
//! Definitions are the source side and entries the target side. Training is
//! IBM Model 1 EM for a few warm-start iterations followed by EM under a
//! diagonal-favoring alignment prior with a NULL source word, in the style of
//! fast_align. Viterbi links are then counted per (target, source) type.
//!
//! The E-step runs over fixed-size chunks of the corpus in parallel. Each
//! chunk accumulates its expected counts in corpus order and the chunk
//! results are folded in chunk order, so the trained model is bit-identical
//! for any number of worker threads.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("alignment corpus is empty")]
    EmptyCorpus,
    #[error("at least one EM iteration is required")]
    NoIterations,
    #[error("invalid alignment parameter: {0}")]
    InvalidParameter(String),
}

/// Pairs per E-step work unit. Fixed so results do not depend on thread count.
const CHUNK_SIZE: usize = 256;

pub const DEFAULT_LAMBDA: f64 = 4.0;
pub const DEFAULT_P0: f64 = 0.08;
pub const DEFAULT_FLOOR: f64 = 1e-9;

/// One tokenized entry/definition pair, as indices into the corpus type tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

/// A Viterbi link between target position `tgt_index` and source position
/// `src_index` (both 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlignmentLink {
    pub tgt_index: usize,
    pub src_index: usize,
}

/// Interned parallel corpus. Type ids follow first occurrence.
#[derive(Debug, Clone, Default)]
pub struct ParallelCorpus {
    src_types: Vec<Vec<u8>>,
    tgt_types: Vec<Vec<u8>>,
    src_index: HashMap<Vec<u8>, u32>,
    tgt_index: HashMap<Vec<u8>, u32>,
    pairs: Vec<SentencePair>,
    skipped: usize,
}

fn intern(types: &mut Vec<Vec<u8>>, index: &mut HashMap<Vec<u8>, u32>, bytes: &[u8]) -> u32 {
    if let Some(&id) = index.get(bytes) {
        return id;
    }
    let id = types.len() as u32;
    types.push(bytes.to_vec());
    index.insert(bytes.to_vec(), id);
    id
}

impl ParallelCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair of token sequences. Pairs with an empty side are counted
    /// in [`skipped`](Self::skipped) and dropped.
    pub fn push<S, T>(&mut self, src: &[S], tgt: &[T])
    where
        S: AsRef<[u8]>,
        T: AsRef<[u8]>,
    {
        if src.is_empty() || tgt.is_empty() {
            self.skipped += 1;
            return;
        }
        let src = src
            .iter()
            .map(|s| intern(&mut self.src_types, &mut self.src_index, s.as_ref()))
            .collect();
        let tgt = tgt
            .iter()
            .map(|t| intern(&mut self.tgt_types, &mut self.tgt_index, t.as_ref()))
            .collect();
        self.pairs.push(SentencePair { src, tgt });
    }

    /// Builds a corpus from whitespace-separated words, one token per word.
    pub fn from_words<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut corpus = Self::new();
        for (src, tgt) in pairs {
            let s: Vec<&str> = src.split_whitespace().collect();
            let t: Vec<&str> = tgt.split_whitespace().collect();
            corpus.push(&s, &t);
        }
        corpus
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn src_type(&self, id: u32) -> &[u8] {
        &self.src_types[id as usize]
    }

    pub fn tgt_type(&self, id: u32) -> &[u8] {
        &self.tgt_types[id as usize]
    }

    pub fn src_type_count(&self) -> usize {
        self.src_types.len()
    }

    pub fn tgt_type_count(&self) -> usize {
        self.tgt_types.len()
    }
}

/// Alignment prior over source positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmMode {
    /// Uniform over source positions, no NULL word.
    Model1,
    /// `p0` on NULL, the rest spread over source positions proportionally to
    /// `exp(-lambda * |i/m - j/n|)` with 1-based positions.
    Diagonal { lambda: f64, p0: f64 },
}

impl EmMode {
    pub fn diagonal() -> Self {
        EmMode::Diagonal {
            lambda: DEFAULT_LAMBDA,
            p0: DEFAULT_P0,
        }
    }

    fn validate(self) -> Result<(), AlignError> {
        if let EmMode::Diagonal { lambda, p0 } = self {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(AlignError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
            }
            if !(0.0..1.0).contains(&p0) {
                return Err(AlignError::InvalidParameter(format!("p0 must be in [0, 1), got {p0}")));
            }
        }
        Ok(())
    }

    /// Fills `out` with the prior over source positions for target position
    /// `j` and returns the NULL probability.
    fn prior(self, j: usize, m: usize, n: usize, out: &mut Vec<f64>) -> f64 {
        out.clear();
        match self {
            EmMode::Model1 => {
                out.resize(m, 1.0 / m as f64);
                0.0
            }
            EmMode::Diagonal { lambda, p0 } => {
                let jn = (j + 1) as f64 / n as f64;
                let mut z = 0.0;
                for i in 0..m {
                    let w = (-lambda * ((i + 1) as f64 / m as f64 - jn).abs()).exp();
                    z += w;
                    out.push(w);
                }
                let scale = (1.0 - p0) / z;
                for w in out.iter_mut() {
                    *w *= scale;
                }
                p0
            }
        }
    }
}

/// A (source type, target type) or (target type, source type) byte pair.
pub type TypePair = (Vec<u8>, Vec<u8>);

/// Warm-start and main EM schedule plus Viterbi settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub model1_iterations: usize,
    pub diagonal_iterations: usize,
    pub lambda: f64,
    pub p0: f64,
    pub floor: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            model1_iterations: 2,
            diagonal_iterations: 5,
            lambda: DEFAULT_LAMBDA,
            p0: DEFAULT_P0,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl AlignConfig {
    pub fn total_iterations(&self) -> usize {
        self.model1_iterations + self.diagonal_iterations
    }
}

/// Co-occurrence index: every (src type, tgt type) pair that shares a
/// sentence pair gets a dense id, sorted by (src, tgt).
#[derive(Debug, Clone)]
struct Cooc {
    keys: Vec<(u32, u32)>,
    lookup: HashMap<(u32, u32), u32>,
    // Per sentence pair, the cooc id of (src[i], tgt[j]) at i * n + j.
    cells: Vec<Vec<u32>>,
    // Cooc id range of each source type.
    rows: Vec<(u32, u32)>,
}

impl Cooc {
    fn build(corpus: &ParallelCorpus) -> Self {
        let mut keys: Vec<(u32, u32)> = corpus
            .pairs
            .iter()
            .flat_map(|p| p.src.iter().flat_map(move |&s| p.tgt.iter().map(move |&t| (s, t))))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let lookup: HashMap<(u32, u32), u32> =
            keys.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        let cells = corpus
            .pairs
            .iter()
            .map(|p| {
                p.src
                    .iter()
                    .flat_map(|&s| p.tgt.iter().map(move |&t| (s, t)))
                    .map(|k| lookup[&k])
                    .collect()
            })
            .collect();
        let mut rows = vec![(0u32, 0u32); corpus.src_type_count()];
        let mut start = 0usize;
        while start < keys.len() {
            let s = keys[start].0;
            let mut end = start;
            while end < keys.len() && keys[end].0 == s {
                end += 1;
            }
            rows[s as usize] = (start as u32, end as u32);
            start = end;
        }
        Self {
            keys,
            lookup,
            cells,
            rows,
        }
    }
}

/// Lexical translation table `p(tgt | src)` plus the alignment prior.
#[derive(Debug, Clone)]
pub struct AlignmentModel {
    mode: EmMode,
    floor: f64,
    src_index: HashMap<Vec<u8>, u32>,
    tgt_index: HashMap<Vec<u8>, u32>,
    src_types: Vec<Vec<u8>>,
    tgt_types: Vec<Vec<u8>>,
    cooc: Cooc,
    probs: Vec<f64>,
    null_probs: Vec<f64>,
    iterations: usize,
}

struct ChunkCounts {
    counts: HashMap<u32, f64>,
    null_counts: HashMap<u32, f64>,
    log_likelihood: f64,
}

impl AlignmentModel {
    /// Uniform model over the corpus: every `p(t|s)` and `p(t|NULL)` is
    /// `1 / |target types|`.
    pub fn uniform(corpus: &ParallelCorpus, mode: EmMode) -> Result<Self, AlignError> {
        if corpus.is_empty() {
            return Err(AlignError::EmptyCorpus);
        }
        mode.validate()?;
        let cooc = Cooc::build(corpus);
        let u = 1.0 / corpus.tgt_type_count() as f64;
        Ok(Self {
            mode,
            floor: DEFAULT_FLOOR,
            src_index: corpus.src_index.clone(),
            tgt_index: corpus.tgt_index.clone(),
            src_types: corpus.src_types.clone(),
            tgt_types: corpus.tgt_types.clone(),
            probs: vec![u; cooc.keys.len()],
            null_probs: vec![u; corpus.tgt_type_count()],
            cooc,
            iterations: 0,
        })
    }

    pub fn mode(&self) -> EmMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: EmMode) -> Result<(), AlignError> {
        mode.validate()?;
        self.mode = mode;
        Ok(())
    }

    pub fn set_floor(&mut self, floor: f64) {
        self.floor = floor;
    }

    pub fn lambda(&self) -> Option<f64> {
        match self.mode {
            EmMode::Diagonal { lambda, .. } => Some(lambda),
            EmMode::Model1 => None,
        }
    }

    pub fn p0(&self) -> f64 {
        match self.mode {
            EmMode::Diagonal { p0, .. } => p0,
            EmMode::Model1 => 0.0,
        }
    }

    /// EM iterations run so far.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `p(tgt | src)`, or `None` if the pair never co-occurred in training.
    pub fn prob(&self, src: &[u8], tgt: &[u8]) -> Option<f64> {
        let s = *self.src_index.get(src)?;
        let t = *self.tgt_index.get(tgt)?;
        self.cooc.lookup.get(&(s, t)).map(|&c| self.probs[c as usize])
    }

    pub fn null_prob(&self, tgt: &[u8]) -> Option<f64> {
        self.tgt_index.get(tgt).map(|&t| self.null_probs[t as usize])
    }

    /// All non-NULL table entries as `((src, tgt), p)`, sorted by bytes.
    pub fn ttable(&self) -> Vec<(TypePair, f64)> {
        let mut out: Vec<_> = self
            .cooc
            .keys
            .iter()
            .zip(&self.probs)
            .map(|(&(s, t), &p)| {
                (
                    (self.src_types[s as usize].clone(), self.tgt_types[t as usize].clone()),
                    p,
                )
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Sum of `p(t|s)` over `t` for every source type.
    pub fn row_sums(&self) -> Vec<f64> {
        self.cooc
            .rows
            .iter()
            .map(|&(a, b)| self.probs[a as usize..b as usize].iter().sum())
            .collect()
    }

    fn expected_counts(&self, corpus: &ParallelCorpus, chunk: usize) -> ChunkCounts {
        let start = chunk * CHUNK_SIZE;
        let end = (start + CHUNK_SIZE).min(corpus.pairs.len());
        let mut acc = ChunkCounts {
            counts: HashMap::new(),
            null_counts: HashMap::new(),
            log_likelihood: 0.0,
        };
        let mut prior = Vec::new();
        let mut post = Vec::new();
        for (pair, cells) in corpus.pairs[start..end].iter().zip(&self.cooc.cells[start..end]) {
            let (m, n) = (pair.src.len(), pair.tgt.len());
            for (j, &t) in pair.tgt.iter().enumerate() {
                let p_null = self.mode.prior(j, m, n, &mut prior);
                let null_score = p_null * self.null_probs[t as usize];
                post.clear();
                let mut denom = null_score;
                for (i, &pr) in prior.iter().enumerate() {
                    let score = pr * self.probs[cells[i * n + j] as usize];
                    denom += score;
                    post.push(score);
                }
                acc.log_likelihood += denom.ln();
                for (i, &score) in post.iter().enumerate() {
                    *acc.counts.entry(cells[i * n + j]).or_default() += score / denom;
                }
                if null_score > 0.0 {
                    *acc.null_counts.entry(t).or_default() += null_score / denom;
                }
            }
        }
        acc
    }

    /// One EM iteration over `corpus`, which must be the corpus the model
    /// was built from. Returns the corpus log-likelihood under the
    /// parameters before the update.
    pub fn em_iteration(&mut self, corpus: &ParallelCorpus) -> f64 {
        assert_eq!(
            corpus.pairs.len(),
            self.cooc.cells.len(),
            "model was built from a different corpus"
        );
        let chunks = corpus.pairs.len().div_ceil(CHUNK_SIZE);
        let partials: Vec<ChunkCounts> = (0..chunks)
            .into_par_iter()
            .map(|c| self.expected_counts(corpus, c))
            .collect();

        let mut counts = vec![0.0; self.probs.len()];
        let mut null_counts = vec![0.0; self.null_probs.len()];
        let mut log_likelihood = 0.0;
        for part in partials {
            for (c, v) in part.counts {
                counts[c as usize] += v;
            }
            for (t, v) in part.null_counts {
                null_counts[t as usize] += v;
            }
            log_likelihood += part.log_likelihood;
        }

        for &(a, b) in &self.cooc.rows {
            let row = a as usize..b as usize;
            let total: f64 = counts[row.clone()].iter().sum();
            if total > 0.0 {
                for c in row {
                    self.probs[c] = counts[c] / total;
                }
            }
        }
        let null_total: f64 = null_counts.iter().sum();
        if null_total > 0.0 {
            for (p, c) in self.null_probs.iter_mut().zip(&null_counts) {
                *p = c / null_total;
            }
        }
        self.iterations += 1;
        log_likelihood
    }

    fn cell_prob(&self, s: Option<u32>, t: Option<u32>) -> f64 {
        match (s, t) {
            (Some(s), Some(t)) => self
                .cooc
                .lookup
                .get(&(s, t))
                .map_or(self.floor, |&c| self.probs[c as usize]),
            _ => self.floor,
        }
    }

    /// Per target position, the best of NULL and every source position under
    /// `prior * p(t|s)`. NULL wins only when strictly better; among source
    /// positions the smaller index wins ties. Unseen types score `floor`.
    pub fn viterbi<S, T>(&self, src: &[S], tgt: &[T]) -> Vec<AlignmentLink>
    where
        S: AsRef<[u8]>,
        T: AsRef<[u8]>,
    {
        let s_ids: Vec<Option<u32>> = src.iter().map(|s| self.src_index.get(s.as_ref()).copied()).collect();
        let t_ids: Vec<Option<u32>> = tgt.iter().map(|t| self.tgt_index.get(t.as_ref()).copied()).collect();
        self.viterbi_ids(&s_ids, &t_ids)
    }

    fn viterbi_ids(&self, src: &[Option<u32>], tgt: &[Option<u32>]) -> Vec<AlignmentLink> {
        let (m, n) = (src.len(), tgt.len());
        let mut links = Vec::new();
        if m == 0 {
            return links;
        }
        let mut prior = Vec::new();
        for (j, &t) in tgt.iter().enumerate() {
            let p_null = self.mode.prior(j, m, n, &mut prior);
            let null_score = p_null * t.map_or(self.floor, |t| self.null_probs[t as usize]);
            let mut best: Option<(usize, f64)> = None;
            for (i, &s) in src.iter().enumerate() {
                let score = prior[i] * self.cell_prob(s, t);
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((i, score));
                }
            }
            if let Some((i, score)) = best {
                if score >= null_score {
                    links.push(AlignmentLink {
                        tgt_index: j,
                        src_index: i,
                    });
                }
            }
        }
        links
    }

    /// Viterbi links for every pair of `corpus`, in corpus order.
    pub fn align_corpus(&self, corpus: &ParallelCorpus) -> Vec<Vec<AlignmentLink>> {
        let remap_src: Vec<Option<u32>> = corpus
            .src_types
            .iter()
            .map(|b| self.src_index.get(b).copied())
            .collect();
        let remap_tgt: Vec<Option<u32>> = corpus
            .tgt_types
            .iter()
            .map(|b| self.tgt_index.get(b).copied())
            .collect();
        corpus
            .pairs
            .par_iter()
            .map(|p| {
                let s: Vec<_> = p.src.iter().map(|&s| remap_src[s as usize]).collect();
                let t: Vec<_> = p.tgt.iter().map(|&t| remap_tgt[t as usize]).collect();
                self.viterbi_ids(&s, &t)
            })
            .collect()
    }
}

/// Trains from a uniform start for `iterations` EM steps under `mode`.
pub fn em_train(
    corpus: &ParallelCorpus,
    iterations: usize,
    mode: EmMode,
) -> Result<AlignmentModel, AlignError> {
    if iterations == 0 {
        return Err(AlignError::NoIterations);
    }
    let mut model = AlignmentModel::uniform(corpus, mode)?;
    for _ in 0..iterations {
        model.em_iteration(corpus);
    }
    Ok(model)
}

/// Model 1 warm start followed by diagonal-prior EM, as configured.
pub fn train_schedule(corpus: &ParallelCorpus, cfg: &AlignConfig) -> Result<AlignmentModel, AlignError> {
    if cfg.total_iterations() == 0 {
        return Err(AlignError::NoIterations);
    }
    let diagonal = EmMode::Diagonal {
        lambda: cfg.lambda,
        p0: cfg.p0,
    };
    diagonal.validate()?;
    let mut model = AlignmentModel::uniform(corpus, EmMode::Model1)?;
    model.set_floor(cfg.floor);
    for _ in 0..cfg.model1_iterations {
        model.em_iteration(corpus);
    }
    if cfg.diagonal_iterations > 0 {
        model.set_mode(diagonal)?;
        for _ in 0..cfg.diagonal_iterations {
            model.em_iteration(corpus);
        }
    }
    Ok(model)
}

/// Token-level link counts keyed by `(tgt type, src type)` bytes.
pub type LinkCounts = BTreeMap<TypePair, u64>;

/// Counts each Viterbi link once per occurrence over `corpus`.
pub fn link_counts(model: &AlignmentModel, corpus: &ParallelCorpus) -> LinkCounts {
    count_links(corpus, &model.align_corpus(corpus))
}

/// Counts previously computed links (one list per pair of `corpus`).
pub fn count_links(corpus: &ParallelCorpus, links: &[Vec<AlignmentLink>]) -> LinkCounts {
    let mut counts = LinkCounts::new();
    for (pair, pair_links) in corpus.pairs.iter().zip(links) {
        for link in pair_links {
            let key = (
                corpus.tgt_type(pair.tgt[link.tgt_index]).to_vec(),
                corpus.src_type(pair.src[link.src_index]).to_vec(),
            );
            *counts.entry(key).or_default() += 1;
        }
    }
    counts
}

/// Pharaoh-format alignment lines: `tgtIdx-srcIdx` links separated by spaces.
pub fn to_pharaoh(links: &[Vec<AlignmentLink>]) -> String {
    let mut out = String::new();
    for pair in links {
        for (k, l) in pair.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}-{}", l.tgt_index, l.src_index);
        }
        out.push('\n');
    }
    out
}
