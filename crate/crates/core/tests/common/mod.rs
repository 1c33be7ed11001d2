#![allow(dead_code)]

//! Reference implementations kept deliberately simple and separate from the
//! library code paths they check.

pub mod em;

use std::collections::HashMap;

use dict_transfer::BpeTokenizer;

/// Splits into maximal whitespace / non-whitespace runs.
pub fn naive_pretokenize(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut last: Option<bool> = None;
    for c in s.chars() {
        let ws = c.is_whitespace();
        if last == Some(ws) {
            out.last_mut().unwrap().push(c);
        } else {
            out.push(c.to_string());
        }
        last = Some(ws);
    }
    out
}

/// Repeatedly applies the lowest-rank merge at its leftmost occurrence.
pub fn naive_tokenize(tok: &BpeTokenizer, s: &str) -> Vec<Vec<u8>> {
    let ranks: HashMap<(Vec<u8>, Vec<u8>), usize> = tok
        .merge_rules()
        .into_iter()
        .map(|m| ((m.left, m.right), m.rank))
        .collect();
    let mut out = Vec::new();
    for piece in naive_pretokenize(s) {
        let mut parts: Vec<Vec<u8>> = piece.bytes().map(|b| vec![b]).collect();
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for pos in 0..parts.len().saturating_sub(1) {
                if let Some(&rank) = ranks.get(&(parts[pos].clone(), parts[pos + 1].clone())) {
                    if best.is_none_or(|(b, _)| rank < b) {
                        best = Some((rank, pos));
                    }
                }
            }
            let Some((_, pos)) = best else { break };
            let right = parts.remove(pos + 1);
            parts[pos].extend(right);
        }
        out.extend(parts);
    }
    out
}

pub fn fast_tokenize(tok: &BpeTokenizer, s: &str) -> Vec<Vec<u8>> {
    tok.tokenize(s).into_iter().map(|t| t.bytes.to_vec()).collect()
}

const SYLLABLES: &[&str] = &[
    "ta", "ci", "mbi", "bu", "bi", "the", "her", "gen", "mo", "rin", "nan", "ge", "sch", "ung", "keit", "ver",
    "ein", "haus", "über", "straße", "ö", "ä", "ñ", "ção", "日本", "語", "ᠮᠠᠨᠵᡠ", "ល", "ខ្មែរ", "-", ".", ",", "7",
    "42",
];

/// Deterministic pseudo-random text built from `SYLLABLES`.
pub fn fixture_lines(count: usize, seed: u64) -> Vec<String> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move |n: usize| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) % n as u64) as usize
    };
    (0..count)
        .map(|_| {
            let words = 1 + next(5);
            let mut line = String::new();
            for w in 0..words {
                if w > 0 {
                    line.push_str(if next(10) == 0 { "  " } else { " " });
                }
                for _ in 0..1 + next(4) {
                    line.push_str(SYLLABLES[next(SYLLABLES.len())]);
                }
            }
            line
        })
        .collect()
}
