//! Synthetic inputs shared by the benchmarks.

use dict_transfer::{DictionaryCorpus, EntryPair};

const TGT: &[&str] = &["ta", "ci", "mbi", "bu", "bi", "the", "mo", "rin", "bo", "o", "hū", "la", "ge", "ne", "ša", "ji"];
const SRC: &[&str] = &["to", "learn", "teach", "book", "read", "horse", "ride", "house", "big", "small", "go", "come", "word", "the", "a", "of"];

struct Lcg(u64);

impl Lcg {
    fn below(&mut self, n: usize) -> usize {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 33) % n as u64) as usize
    }
}

/// A dictionary of `n` pairs whose target words are built from syllables
/// correlated with the source glosses.
pub fn synthetic_dictionary(n: usize, seed: u64) -> DictionaryCorpus {
    let mut rng = Lcg(seed ^ 0x9e37_79b9_7f4a_7c15);
    let pairs = (0..n)
        .map(|_| {
            let words = 1 + rng.below(3);
            let mut entry = Vec::new();
            let mut gloss = Vec::new();
            for _ in 0..words {
                let root = rng.below(SRC.len());
                let mut w = String::from(TGT[root]);
                for _ in 0..rng.below(3) {
                    w.push_str(TGT[rng.below(TGT.len())]);
                }
                entry.push(w);
                gloss.push(SRC[root]);
                if rng.below(3) == 0 {
                    gloss.push(SRC[rng.below(SRC.len())]);
                }
            }
            EntryPair::new(&entry.join(" "), &gloss.join(" ")).expect("non-empty")
        })
        .collect();
    DictionaryCorpus::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(synthetic_dictionary(50, 3), synthetic_dictionary(50, 3));
        assert_eq!(synthetic_dictionary(50, 3).len(), 50);
    }
}
