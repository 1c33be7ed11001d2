use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::{pretokenize, BpeError, BpeTokenizer, TokenId};

pub const DEFAULT_MIN_FREQUENCY: u64 = 2;

/// BPE trainer over whitespace pre-tokens.
///
/// Starts from the 256 byte tokens (plus any special tokens) and repeatedly
/// merges the most frequent adjacent pair. Ties go to the lexicographically
/// smallest `(left, right)` byte pair, so the result depends only on the
/// multiset of input strings.
#[derive(Debug, Clone)]
pub struct BpeTrainer {
    pub vocab_budget: usize,
    pub min_frequency: u64,
    /// Added after the byte tokens. Never produced by merges unless the
    /// corpus spells them out.
    pub special_tokens: Vec<Vec<u8>>,
}

impl BpeTrainer {
    pub fn new(vocab_budget: usize) -> Self {
        Self {
            vocab_budget,
            min_frequency: DEFAULT_MIN_FREQUENCY,
            special_tokens: Vec::new(),
        }
    }

    pub fn min_frequency(mut self, min_frequency: u64) -> Self {
        self.min_frequency = min_frequency.max(1);
        self
    }

    pub fn special_tokens<I, B>(mut self, tokens: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: Into<Vec<u8>>,
    {
        self.special_tokens = tokens.into_iter().map(Into::into).collect();
        self
    }

    pub fn train<I, S>(&self, corpus: I) -> Result<BpeTokenizer, BpeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if self.vocab_budget < 256 {
            return Err(BpeError::BudgetTooSmall(self.vocab_budget));
        }

        let mut vocab: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut index: HashMap<Vec<u8>, TokenId> =
            vocab.iter().enumerate().map(|(i, b)| (b.clone(), i as TokenId)).collect();
        for special in &self.special_tokens {
            if special.is_empty() || index.contains_key(special) {
                continue;
            }
            index.insert(special.clone(), vocab.len() as TokenId);
            vocab.push(special.clone());
        }

        let mut word_freq: HashMap<String, u64> = HashMap::new();
        for line in corpus {
            for (piece, _) in pretokenize(line.as_ref()) {
                *word_freq.entry(piece.to_string()).or_default() += 1;
            }
        }
        let mut sorted: Vec<(String, u64)> = word_freq.into_iter().collect();
        sorted.sort_unstable();
        let counts: Vec<i64> = sorted.iter().map(|(_, c)| *c as i64).collect();
        let mut words: Vec<Vec<TokenId>> = sorted
            .iter()
            .map(|(w, _)| w.bytes().map(TokenId::from).collect())
            .collect();

        let mut pair_counts: HashMap<(TokenId, TokenId), i64> = HashMap::new();
        let mut pair_words: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
        for (wi, word) in words.iter().enumerate() {
            for pair in word.windows(2) {
                let key = (pair[0], pair[1]);
                *pair_counts.entry(key).or_default() += counts[wi];
                pair_words.entry(key).or_default().insert(wi);
            }
        }

        let mut heap: BinaryHeap<Candidate> = pair_counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&pair, &count)| Candidate::new(pair, count, &vocab))
            .collect();

        let mut merges: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
        while vocab.len() < self.vocab_budget {
            let Some(top) = heap.pop() else { break };
            let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
            if current != top.count {
                if current > 0 {
                    heap.push(Candidate::new(top.pair, current, &vocab));
                }
                continue;
            }
            if (current as u64) < self.min_frequency {
                break;
            }

            let (left, right) = top.pair;
            let joined = [vocab[left as usize].as_slice(), vocab[right as usize].as_slice()].concat();
            let result = match index.get(&joined) {
                Some(&id) => id,
                None => {
                    let id = vocab.len() as TokenId;
                    index.insert(joined.clone(), id);
                    vocab.push(joined);
                    id
                }
            };
            merges.push((vocab[left as usize].clone(), vocab[right as usize].clone()));

            let mut affected: Vec<usize> = pair_words
                .remove(&top.pair)
                .map(|s| s.into_iter().collect())
                .unwrap_or_default();
            affected.sort_unstable();
            let mut touched: HashSet<(TokenId, TokenId)> = HashSet::new();
            for wi in affected {
                let word = &mut words[wi];
                let count = counts[wi];
                for pair in word.windows(2) {
                    let key = (pair[0], pair[1]);
                    *pair_counts.get_mut(&key).expect("pair counted") -= count;
                    touched.insert(key);
                }
                merge_word(word, left, right, result);
                for pair in word.windows(2) {
                    let key = (pair[0], pair[1]);
                    *pair_counts.entry(key).or_default() += count;
                    pair_words.entry(key).or_default().insert(wi);
                    touched.insert(key);
                }
            }
            pair_counts.remove(&top.pair);
            for key in touched {
                match pair_counts.get(&key).copied() {
                    Some(c) if c > 0 => heap.push(Candidate::new(key, c, &vocab)),
                    Some(_) => {
                        pair_counts.remove(&key);
                    }
                    None => {}
                }
            }
        }

        BpeTokenizer::from_parts(vocab, merges)
    }
}

fn merge_word(word: &mut Vec<TokenId>, left: TokenId, right: TokenId, result: TokenId) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
            out.push(result);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

/// Heap entry: higher count first, then the smaller byte pair.
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: i64,
    key: Reverse<(Vec<u8>, Vec<u8>)>,
    pair: (TokenId, TokenId),
}

impl Candidate {
    fn new(pair: (TokenId, TokenId), count: i64, vocab: &[Vec<u8>]) -> Self {
        Self {
            count,
            key: Reverse((vocab[pair.0 as usize].clone(), vocab[pair.1 as usize].clone())),
            pair,
        }
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| self.key.cmp(&other.key))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
