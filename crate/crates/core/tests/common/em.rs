//! Exhaustive Model 1 EM used as an oracle for the aligner.

use std::collections::BTreeMap;

pub type Table = BTreeMap<(String, String), f64>;

/// Exhaustive Model 1 EM: enumerate all source-position assignments for each
/// target sentence, weight them by the product of translation probabilities,
/// and collect fractional counts. Returns the table and the per-iteration
/// log-likelihoods.
pub fn brute_force_model1(pairs: &[(&str, &str)], iterations: usize) -> (Table, Vec<f64>) {
    let pairs: Vec<(Vec<&str>, Vec<&str>)> = pairs
        .iter()
        .map(|(s, t)| (s.split_whitespace().collect(), t.split_whitespace().collect()))
        .collect();
    let mut tgt_vocab: Vec<&str> = pairs.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    tgt_vocab.sort();
    tgt_vocab.dedup();
    let mut table = Table::new();
    for (src, tgt) in &pairs {
        for s in src {
            for t in tgt {
                table.insert((s.to_string(), t.to_string()), 1.0 / tgt_vocab.len() as f64);
            }
        }
    }

    let mut lls = Vec::new();
    for _ in 0..iterations {
        let mut counts: Table = table.keys().map(|k| (k.clone(), 0.0)).collect();
        let mut ll = 0.0;
        for (src, tgt) in &pairs {
            let (m, n) = (src.len(), tgt.len());
            let mut alignments = vec![vec![]];
            for _ in 0..n {
                alignments = alignments
                    .into_iter()
                    .flat_map(|a: Vec<usize>| {
                        (0..m).map(move |i| {
                            let mut b = a.clone();
                            b.push(i);
                            b
                        })
                    })
                    .collect();
            }
            let weights: Vec<f64> = alignments
                .iter()
                .map(|a| {
                    a.iter()
                        .enumerate()
                        .map(|(j, &i)| table[&(src[i].to_string(), tgt[j].to_string())] / m as f64)
                        .product()
                })
                .collect();
            let z: f64 = weights.iter().sum();
            ll += z.ln();
            for (a, w) in alignments.iter().zip(&weights) {
                for (j, &i) in a.iter().enumerate() {
                    *counts.get_mut(&(src[i].to_string(), tgt[j].to_string())).unwrap() += w / z;
                }
            }
        }
        lls.push(ll);
        let mut totals: BTreeMap<String, f64> = BTreeMap::new();
        for ((s, _), c) in &counts {
            *totals.entry(s.clone()).or_default() += c;
        }
        table = counts
            .into_iter()
            .map(|((s, t), c)| {
                let total = totals[&s];
                ((s, t), c / total)
            })
            .collect();
    }
    (table, lls)
}
