//! Byte-level BPE.
//!
//! Tokens are raw byte sequences. Every tokenizer carries all 256 single-byte
//! tokens, so any input can be encoded. Removing a token deletes every merge
//! rule that mentions it; the words it used to cover then fall back to the
//! shorter pieces that the surviving rules still produce.

mod convert;
mod serialize;
mod train;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

pub use convert::{bytes_to_unicode, from_gpt2_files, from_hf_tokenizer_json};
pub use serialize::TOKENIZER_FILE_VERSION;
pub use train::{BpeTrainer, DEFAULT_MIN_FREQUENCY};

pub type TokenId = u32;

#[derive(Debug, thiserror::Error)]
pub enum BpeError {
    #[error("vocab budget {0} is below the 256 base byte tokens")]
    BudgetTooSmall(usize),
    #[error("token {0} is empty")]
    EmptyToken(usize),
    #[error("duplicate token {} at ids {first} and {second}", hex::encode(bytes))]
    DuplicateToken {
        bytes: Vec<u8>,
        first: usize,
        second: usize,
    },
    #[error("vocabulary is missing base byte token {0:#04x}")]
    MissingByte(u8),
    #[error("merges[{rank}]: {what} token {} is not in the vocabulary", hex::encode(bytes))]
    UnknownMergeToken {
        rank: usize,
        what: &'static str,
        bytes: Vec<u8>,
    },
    #[error("merges[{rank}]: duplicate pair, first seen at merges[{first}]")]
    DuplicateMerge { rank: usize, first: usize },
    #[error("cannot remove base byte token {0:#04x}")]
    RemoveByteToken(u8),
    #[error("cannot remove token {}: not in the vocabulary", hex::encode(.0))]
    RemoveAbsentToken(Vec<u8>),
    #[error("tokenizer file: {0}")]
    Format(String),
}

/// One token of a tokenization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token<'a> {
    pub id: TokenId,
    pub bytes: &'a [u8],
}

/// A merge rule with its bytes spelled out. Lower rank applies first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRule {
    pub left: Vec<u8>,
    pub right: Vec<u8>,
    pub result: Vec<u8>,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Merge {
    left: TokenId,
    right: TokenId,
    result: TokenId,
}

/// Immutable byte-level BPE tokenizer.
#[derive(Clone)]
pub struct BpeTokenizer {
    vocab: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, TokenId>,
    merges: Vec<Merge>,
    // (left, right) -> (rank, result)
    pair_ranks: HashMap<(TokenId, TokenId), (u32, TokenId)>,
    byte_ids: [TokenId; 256],
}

impl fmt::Debug for BpeTokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BpeTokenizer")
            .field("vocab_size", &self.vocab.len())
            .field("merges", &self.merges.len())
            .finish()
    }
}

impl PartialEq for BpeTokenizer {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab && self.merges == other.merges
    }
}

impl Eq for BpeTokenizer {}

impl BpeTokenizer {
    /// Base tokenizer: the 256 single bytes at ids 0..=255 and no merges.
    pub fn base() -> Self {
        let vocab = (0..=255u8).map(|b| vec![b]).collect();
        Self::from_parts(vocab, Vec::new()).expect("byte alphabet is a valid vocabulary")
    }

    /// Builds a tokenizer from `vocab` (index = id) and merges in rank order.
    pub fn from_parts(
        vocab: Vec<Vec<u8>>,
        merges: Vec<(Vec<u8>, Vec<u8>)>,
    ) -> Result<Self, BpeError> {
        let mut index = HashMap::with_capacity(vocab.len());
        for (id, bytes) in vocab.iter().enumerate() {
            if bytes.is_empty() {
                return Err(BpeError::EmptyToken(id));
            }
            if let Some(first) = index.insert(bytes.clone(), id as TokenId) {
                return Err(BpeError::DuplicateToken {
                    bytes: bytes.clone(),
                    first: first as usize,
                    second: id,
                });
            }
        }
        let mut byte_ids = [0; 256];
        for b in 0..=255u8 {
            byte_ids[b as usize] = *index.get([b].as_slice()).ok_or(BpeError::MissingByte(b))?;
        }

        let lookup = |rank: usize, what: &'static str, bytes: &[u8]| {
            index
                .get(bytes)
                .copied()
                .ok_or_else(|| BpeError::UnknownMergeToken {
                    rank,
                    what,
                    bytes: bytes.to_vec(),
                })
        };
        let mut compiled = Vec::with_capacity(merges.len());
        let mut pair_ranks = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.iter().enumerate() {
            let l = lookup(rank, "left", left)?;
            let r = lookup(rank, "right", right)?;
            let joined = [left.as_slice(), right.as_slice()].concat();
            let result = lookup(rank, "result", &joined)?;
            if let Some((first, _)) = pair_ranks.insert((l, r), (rank as u32, result)) {
                return Err(BpeError::DuplicateMerge {
                    rank,
                    first: first as usize,
                });
            }
            compiled.push(Merge {
                left: l,
                right: r,
                result,
            });
        }

        Ok(Self {
            vocab,
            index,
            merges: compiled,
            pair_ranks,
            byte_ids,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    /// Token byte strings in id order.
    pub fn vocab(&self) -> &[Vec<u8>] {
        &self.vocab
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.vocab.get(id as usize).map(Vec::as_slice)
    }

    pub fn token_id(&self, bytes: &[u8]) -> Option<TokenId> {
        self.index.get(bytes).copied()
    }

    pub fn contains(&self, bytes: &[u8]) -> bool {
        self.index.contains_key(bytes)
    }

    /// Merge rules in rank order.
    pub fn merge_rules(&self) -> Vec<MergeRule> {
        self.merges
            .iter()
            .enumerate()
            .map(|(rank, m)| MergeRule {
                left: self.vocab[m.left as usize].clone(),
                right: self.vocab[m.right as usize].clone(),
                result: self.vocab[m.result as usize].clone(),
                rank,
            })
            .collect()
    }

    pub(crate) fn merge_pairs(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        self.merges
            .iter()
            .map(|m| (self.vocab[m.left as usize].as_slice(), self.vocab[m.right as usize].as_slice()))
    }

    /// Rank and result of the merge for `(left, right)`, if any.
    pub fn merge_for(&self, left: TokenId, right: TokenId) -> Option<(u32, TokenId)> {
        self.pair_ranks.get(&(left, right)).copied()
    }

    pub fn byte_id(&self, b: u8) -> TokenId {
        self.byte_ids[b as usize]
    }

    /// Encodes `s` to token ids.
    pub fn encode(&self, s: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (piece, _) in pretokenize(s) {
            self.encode_piece_into(piece.as_bytes(), &mut out);
        }
        out
    }

    /// Encodes `s`, dropping pre-tokens that are pure whitespace.
    pub fn encode_words(&self, s: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (piece, is_space) in pretokenize(s) {
            if !is_space {
                self.encode_piece_into(piece.as_bytes(), &mut out);
            }
        }
        out
    }

    pub fn tokenize<'a>(&'a self, s: &str) -> Vec<Token<'a>> {
        self.encode(s)
            .into_iter()
            .map(|id| Token {
                id,
                bytes: &self.vocab[id as usize],
            })
            .collect()
    }

    /// Concatenated bytes of a sequence of ids.
    pub fn decode_bytes(&self, ids: &[TokenId]) -> Vec<u8> {
        ids.iter()
            .flat_map(|&id| self.vocab[id as usize].iter().copied())
            .collect()
    }

    /// Applies merges to one pre-token, lowest rank first and leftmost among
    /// equal ranks.
    fn encode_piece_into(&self, piece: &[u8], out: &mut Vec<TokenId>) {
        if piece.is_empty() {
            return;
        }
        if piece.len() == 1 {
            out.push(self.byte_ids[piece[0] as usize]);
            return;
        }

        const NONE: usize = usize::MAX;
        struct Sym {
            id: TokenId,
            prev: usize,
            next: usize,
            alive: bool,
        }
        let n = piece.len();
        let mut syms: Vec<Sym> = piece
            .iter()
            .enumerate()
            .map(|(i, &b)| Sym {
                id: self.byte_ids[b as usize],
                prev: if i == 0 { NONE } else { i - 1 },
                next: if i + 1 == n { NONE } else { i + 1 },
                alive: true,
            })
            .collect();

        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some((rank, _)) = self.merge_for(syms[i].id, syms[i + 1].id) {
                heap.push(Reverse((rank, i)));
            }
        }

        while let Some(Reverse((rank, pos))) = heap.pop() {
            if !syms[pos].alive || syms[pos].next == NONE {
                continue;
            }
            let next = syms[pos].next;
            let result = match self.merge_for(syms[pos].id, syms[next].id) {
                Some((r, result)) if r == rank => result,
                _ => continue,
            };
            syms[pos].id = result;
            syms[next].alive = false;
            let after = syms[next].next;
            syms[pos].next = after;
            if after != NONE {
                syms[after].prev = pos;
                if let Some((r, _)) = self.merge_for(result, syms[after].id) {
                    heap.push(Reverse((r, pos)));
                }
            }
            let before = syms[pos].prev;
            if before != NONE {
                if let Some((r, _)) = self.merge_for(syms[before].id, result) {
                    heap.push(Reverse((r, before)));
                }
            }
        }

        let mut i = 0;
        while i != NONE {
            out.push(syms[i].id);
            i = syms[i].next;
        }
    }

    /// Returns a tokenizer without `doomed` and without every merge rule in
    /// which a doomed token is the left part, right part or result.
    /// Surviving tokens and rules keep their relative order; ids are
    /// re-densified.
    pub fn remove_tokens<B: AsRef<[u8]>>(&self, doomed: &[B]) -> Result<Self, BpeError> {
        let mut gone: HashSet<TokenId> = HashSet::with_capacity(doomed.len());
        for bytes in doomed {
            let bytes = bytes.as_ref();
            if bytes.len() == 1 {
                return Err(BpeError::RemoveByteToken(bytes[0]));
            }
            let id = self
                .token_id(bytes)
                .ok_or_else(|| BpeError::RemoveAbsentToken(bytes.to_vec()))?;
            gone.insert(id);
        }
        let vocab = self
            .vocab
            .iter()
            .enumerate()
            .filter(|(id, _)| !gone.contains(&(*id as TokenId)))
            .map(|(_, b)| b.clone())
            .collect();
        let merges = self
            .merges
            .iter()
            .filter(|m| !(gone.contains(&m.left) || gone.contains(&m.right) || gone.contains(&m.result)))
            .map(|m| (self.vocab[m.left as usize].clone(), self.vocab[m.right as usize].clone()))
            .collect();
        Self::from_parts(vocab, merges)
    }

    /// Total number of tokens over `corpus`, not counting whitespace pre-tokens.
    pub fn count_subwords<I, S>(&self, corpus: I) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        corpus
            .into_iter()
            .map(|s| self.encode_words(s.as_ref()).len())
            .sum()
    }
}

/// Splits `s` into maximal runs of whitespace and non-whitespace characters.
/// The flag is `true` for whitespace runs.
pub fn pretokenize(s: &str) -> impl Iterator<Item = (&str, bool)> {
    let mut rest = s;
    std::iter::from_fn(move || {
        let first = rest.chars().next()?;
        let space = first.is_whitespace();
        let end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace() != space)
            .map_or(rest.len(), |(i, _)| i);
        let (piece, tail) = rest.split_at(end);
        rest = tail;
        Some((piece, space))
    })
}

/// Printable form of a token: the UTF-8 text when valid, hex escapes otherwise.
pub fn display_token(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.escape_debug().to_string(),
        Err(_) => bytes.iter().map(|b| format!("\\x{b:02x}")).collect(),
    }
}
