//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::em::brute_force_model1;
use common::{fast_tokenize, fixture_lines, naive_tokenize};
use dict_transfer::align::{em_train, AlignmentModel, EmMode, ParallelCorpus};
use dict_transfer::dictio::{normalize, parse_dictionary, parse_dictionary_str, DictFormat};
use dict_transfer::embed::{init_target_matrix, relative_counts};
use dict_transfer::mapping::{load_mapping, run_mapping, run_mapping_with, MappingConfig, SourceCounts};
use dict_transfer::{
    BpeTokenizer, BpeTrainer, DictionaryCorpus, EmbeddingMatrix, EntryPair, InitPolicy, Provenance, SubwordMap,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = Box<dyn Fn() -> Option<Outcome>>;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn trained_tokenizer() -> BpeTokenizer {
    BpeTrainer::new(600).train(fixture_lines(2000, 1)).expect("train fixture tokenizer")
}

const SYLLABLES: &[&str] = &["ta", "ci", "mbi", "the", "haus", "über", "ção", "日本", "ᠮᠠᠨᠵᡠ", "ខ្មែរ", "42", "."];

/// Random valid UTF-8 of at most `max_chars` chars, mixing ASCII, whitespace,
/// fixture syllables and arbitrary scalar values.
fn random_string(rng: &mut ChaCha8Rng, max_chars: usize) -> String {
    let target = rng.random_range(0..=max_chars);
    let mut s = String::new();
    let mut n = 0;
    while n < target {
        let piece: String = match rng.random_range(0..10) {
            0..=3 => (rng.random_range(b' '..=b'~') as char).to_string(),
            4 => [" ", "  ", "\t", "\n", "\u{3000}", "\u{a0}"].choose(rng).unwrap().to_string(),
            5..=6 => SYLLABLES.choose(rng).unwrap().to_string(),
            _ => rng.random::<char>().to_string(),
        };
        for c in piece.chars() {
            if n == target {
                break;
            }
            s.push(c);
            n += 1;
        }
    }
    s
}

fn bpe_round_trip() -> Outcome {
    let tok = trained_tokenizer();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<String> = (0..10_000).map(|_| random_string(&mut rng, 200)).collect();
    let start = Instant::now();
    let mut failures = 0;
    for s in &inputs {
        let toks = tok.tokenize(s);
        let bytes: Vec<u8> = toks.iter().flat_map(|t| t.bytes.iter().copied()).collect();
        if bytes != s.as_bytes() || tok.decode_bytes(&tok.encode(s)) != s.as_bytes() {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(failures == 0, "{failures} of 10000 strings failed to round-trip");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:.2?} (limit 5 s)");
    Ok(format!("10000 strings, 0 failures, {elapsed:.2?}"))
}

fn bpe_oracle_equivalence() -> Outcome {
    let tok = trained_tokenizer();
    let lines = fixture_lines(1000, 2);
    let mismatches: Vec<&String> = lines
        .iter()
        .filter(|l| fast_tokenize(&tok, l) != naive_tokenize(&tok, l))
        .collect();
    ensure!(mismatches.is_empty(), "{} mismatches, first: {:?}", mismatches.len(), mismatches[0]);
    Ok(format!("1000 lines, {} merges, 0 mismatches", tok.merge_count()))
}

fn fallback_soundness() -> Outcome {
    let tokenizers: Vec<BpeTokenizer> = (0..5u64)
        .map(|k| BpeTrainer::new(300 + 100 * k as usize).train(fixture_lines(600, 10 + k)).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..500 {
        let tok = &tokenizers[trial % tokenizers.len()];
        let candidates: Vec<&Vec<u8>> = tok.vocab().iter().filter(|t| t.len() > 1).collect();
        let doomed = (*candidates.choose(&mut rng).unwrap()).clone();
        let reduced = tok.remove_tokens(std::slice::from_ref(&doomed)).map_err(|e| e.to_string())?;
        let mut text = random_string(&mut rng, 60);
        let at = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect::<Vec<_>>();
        let at = *at.choose(&mut rng).unwrap();
        text.insert_str(at, &String::from_utf8_lossy(&doomed));
        let toks = fast_tokenize(&reduced, &text);
        ensure!(!toks.contains(&doomed), "trial {trial}: removed token {doomed:?} emitted for {text:?}");
        ensure!(toks.concat() == text.as_bytes(), "trial {trial}: bytes not reconstructed for {text:?}");
        ensure!(toks == naive_tokenize(&reduced, &text), "trial {trial}: differs from reference on {text:?}");
        ensure!(reduced.vocab_size() == tok.vocab_size() - 1, "trial {trial}: vocab did not shrink by one");
    }
    Ok("500 triples over 5 tokenizers".into())
}

fn em_correctness() -> Outcome {
    let toy = [("the house", "das haus"), ("the book", "das buch")];
    let corpus = ParallelCorpus::from_words(toy);
    let model = em_train(&corpus, 10, EmMode::Model1).map_err(|e| e.to_string())?;
    let (oracle, oracle_lls) = brute_force_model1(&toy, 10);
    let got: BTreeMap<(String, String), f64> = model
        .ttable()
        .into_iter()
        .map(|((s, t), p)| ((String::from_utf8(s).unwrap(), String::from_utf8(t).unwrap()), p))
        .collect();
    ensure!(
        got.keys().eq(oracle.keys()),
        "table keys differ: {:?} vs {:?}",
        got.keys(),
        oracle.keys()
    );
    let worst = oracle.iter().map(|(k, v)| (got[k] - v).abs()).fold(0.0, f64::max);
    ensure!(worst <= 1e-6, "max deviation from oracle {worst:e}");
    let p = got[&("the".to_string(), "das".to_string())];
    ensure!(p > 0.9, "p(das|the) = {p}");

    let mut fresh = AlignmentModel::uniform(&corpus, EmMode::Model1).map_err(|e| e.to_string())?;
    let lls: Vec<f64> = (0..10).map(|_| fresh.em_iteration(&corpus)).collect();
    for w in lls.windows(2) {
        ensure!(w[1] >= w[0] - 1e-9, "log-likelihood decreased: {lls:?}");
    }
    let ll_dev = lls.iter().zip(&oracle_lls).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(ll_dev <= 1e-9, "log-likelihood differs from oracle by {ll_dev:e}");
    Ok(format!("max |Δ| = {worst:.1e}, p(das|the) = {p:.6}"))
}

const NESTED_FIXTURE_DICT: &str = "\
tacimbi\tto learn
tacibumbi\tto teach
bithe\tbook
bithe hūlambi\tto read a book
hūlambi\tto read
morin\thorse
morin yalumbi\tto ride a horse
amba boo\tbig house
boo\thouse
";

fn fixpoint() -> Outcome {
    let ab_tok = BpeTokenizer::from_parts(
        (0u8..=255).map(|b| vec![b]).chain([b"ab".to_vec()]).collect(),
        vec![(b"a".to_vec(), b"b".to_vec())],
    )
    .map_err(|e| e.to_string())?;
    let ab_dict = DictionaryCorpus::new(vec![EntryPair::new("ab", "x").unwrap()]);
    let run = run_mapping(&BpeTokenizer::base(), &ab_tok, &ab_dict, &MappingConfig::default())
        .map_err(|e| e.to_string())?;
    let counts: Vec<usize> = run.report.per_iteration.iter().map(|&(_, n)| n).collect();
    ensure!(counts == [1, 2, 0], "nested dictionary per-iteration counts {counts:?}");

    let mini = normalize(
        &parse_dictionary(&support::fixture("mini_dict.tsv"), DictFormat::Tab).map_err(|e| e.to_string())?,
        false,
    );
    let small = parse_dictionary_str(NESTED_FIXTURE_DICT, DictFormat::Tab).map_err(|e| e.to_string())?;
    let fixtures = [("ab", ab_dict, BpeTokenizer::base(), ab_tok), {
        let src = BpeTokenizer::load(&support::fixture("source_tokenizer.json")).map_err(|e| e.to_string())?;
        let tgt = BpeTrainer::new(400).train(mini.entries()).map_err(|e| e.to_string())?;
        ("mini_dict", mini, src, tgt)
    }, {
        let src = BpeTrainer::new(300).train(small.definitions()).map_err(|e| e.to_string())?;
        let tgt = BpeTrainer::new(300).train(small.entries()).map_err(|e| e.to_string())?;
        ("small", small, src, tgt)
    }];

    let cfg = MappingConfig::default();
    let mut loops = Vec::new();
    for (name, dict, src, tgt) in &fixtures {
        let mut traces: Vec<BTreeSet<Vec<u8>>> = Vec::new();
        let run = run_mapping_with(src, tgt, dict, &cfg, |view| {
            let types = view
                .corpus
                .pairs()
                .iter()
                .flat_map(|p| p.tgt.iter().map(|&id| view.corpus.tgt_type(id).to_vec()))
                .collect();
            traces.push(types);
        })
        .map_err(|e| format!("{name}: {e}"))?;
        ensure!(!run.report.truncated, "{name}: hit max_loops");
        ensure!(run.deltas.len() <= cfg.max_loops, "{name}: {} loops", run.deltas.len());
        ensure!(
            run.deltas.last().is_some_and(|d| d.new_mappings.is_empty()),
            "{name}: last loop was productive"
        );
        let mut removed = BTreeSet::new();
        for (delta, seen) in run.deltas.iter().zip(&traces) {
            let back: Vec<_> = seen.intersection(&removed).collect();
            ensure!(back.is_empty(), "{name}: loop {} re-emits removed {back:?}", delta.iteration);
            removed.extend(delta.removed.iter().cloned());
        }
        loops.push(format!("{name} {}", run.deltas.len()));
    }
    Ok(format!("[1, 2, 0]; loops: {}", loops.join(", ")))
}

fn embedding_math() -> Outcome {
    const DIM: usize = 8;
    const ENTRIES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let src_tok = BpeTokenizer::base();
    let values: Vec<f32> = (0..256 * DIM).map(|_| rng.random_range(-5.0f32..5.0)).collect();
    let src = EmbeddingMatrix::from_vec(256, DIM, values.clone()).map_err(|e| e.to_string())?;

    let names: Vec<Vec<u8>> = (0..ENTRIES).map(|k| format!("t{k:04}").into_bytes()).collect();
    let tgt_tok = BpeTokenizer::from_parts(
        (0u8..=255).map(|b| vec![b]).chain(names.iter().cloned()).collect(),
        Vec::new(),
    )
    .map_err(|e| e.to_string())?;
    let entries: Vec<SourceCounts> = (0..ENTRIES)
        .map(|_| {
            let k = rng.random_range(1..=8);
            (0..k)
                .map(|_| (vec![rng.random::<u8>()], rng.random_range(1..100u64)))
                .collect()
        })
        .collect();
    let map_of = |entries: &[SourceCounts]| {
        let mut map = SubwordMap::new();
        map.update(&names.iter().cloned().zip(entries.iter().cloned()).collect(), 1);
        map
    };
    let policy = InitPolicy {
        unk_token: Some(b"?".to_vec()),
        copy_digits_punct: false,
        ..InitPolicy::default()
    };
    let init = |emb: &EmbeddingMatrix, map: &SubwordMap| {
        init_target_matrix(emb, &src_tok, &tgt_tok, map, &policy).map_err(|e| e.to_string())
    };

    let base = init(&src, &map_of(&entries))?;
    let alpha = -2.5f32;
    let scaled_src =
        EmbeddingMatrix::from_vec(256, DIM, values.iter().map(|v| v * alpha).collect()).map_err(|e| e.to_string())?;
    let scaled = init(&scaled_src, &map_of(&entries))?;
    let singles: Vec<SourceCounts> = entries
        .iter()
        .map(|e| {
            let (s, c) = e.iter().next().unwrap();
            SourceCounts::from([(s.clone(), *c)])
        })
        .collect();
    let single = init(&src, &map_of(&singles))?;

    for (k, entry) in entries.iter().enumerate() {
        let row_id = 256 + k;
        ensure!(base.provenance[row_id] == Provenance::Averaged, "entry {k} not averaged");
        let sum: f64 = relative_counts(entry).map_err(|e| e.to_string())?.iter().map(|(_, w)| w).sum();
        ensure!((sum - 1.0).abs() <= 1e-9, "entry {k}: weights sum to {sum}");
        let row = base.matrix.row(row_id);
        for (d, &v) in row.iter().enumerate() {
            let coords = entry.keys().map(|s| src.row(s[0] as usize)[d]);
            let lo = coords.clone().fold(f32::INFINITY, f32::min);
            let hi = coords.fold(f32::NEG_INFINITY, f32::max);
            ensure!(lo <= v && v <= hi, "entry {k} dim {d}: {v} outside [{lo}, {hi}]");
        }
        for (&a, &b) in row.iter().zip(scaled.matrix.row(row_id)) {
            let expected = a * alpha;
            ensure!(
                (b - expected).abs() <= 1e-6 * expected.abs().max(1.0),
                "entry {k}: scaled {b} vs {expected}"
            );
        }
        let s = singles[k].keys().next().unwrap()[0] as usize;
        let copy_ok = single
            .matrix
            .row(row_id)
            .iter()
            .zip(src.row(s))
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(copy_ok, "entry {k}: single-source row is not a bitwise copy");
    }
    Ok(format!("{ENTRIES} entries, dim {DIM}, alpha {alpha}"))
}

fn transfer_ok(dir: &Path, extra: &[&str]) -> Result<(), String> {
    let out = support::transfer(dir, extra);
    ensure!(out.status.success(), "transfer failed: {}", support::stderr(&out));
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    transfer_ok(a.path(), &["--seed", "42"])?;
    transfer_ok(b.path(), &["--seed", "42"])?;
    let elapsed = start.elapsed();
    for name in ["embeddings.bin", "mapping.json"] {
        let x = fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{name} differs between runs");
    }
    ensure!(elapsed < Duration::from_secs(10), "two runs took {elapsed:.2?} (limit 10 s)");
    Ok(format!("embeddings.bin and mapping.json identical, two runs in {elapsed:.2?}"))
}

fn ablation() -> Outcome {
    let full_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let abl_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    transfer_ok(full_dir.path(), &[])?;
    transfer_ok(abl_dir.path(), &["--no-removal"])?;
    let load = |dir: &Path| load_mapping(&dir.join("mapping.json")).map_err(|e| e.to_string());
    let (full, _) = load(full_dir.path())?;
    let (abl, _) = load(abl_dir.path())?;

    let abl_rows = dict_transfer::mapping::report(&abl, 0).per_iteration;
    let productive = abl_rows.iter().filter(|&&(_, n)| n > 0).count();
    ensure!(productive == 1, "--no-removal has {productive} productive iterations: {abl_rows:?}");
    let first_loop: Vec<_> = full.iter().filter(|&(_, _, it)| it == 1).map(|(t, s, _)| (t, s)).collect();
    let ablated: Vec<_> = abl.iter().map(|(t, s, _)| (t, s)).collect();
    ensure!(
        first_loop == ablated,
        "ablated mapping ({} types) differs from loop 1 of the full run ({} types)",
        ablated.len(),
        first_loop.len()
    );
    Ok(format!(
        "1 productive iteration, {} types equal to loop 1 (full run maps {})",
        ablated.len(),
        full.len()
    ))
}

const MUSE_DICT_ENV: &str = "DICT_TRANSFER_MUSE_DICT";
const MUSE_TOKENIZER_ENV: &str = "DICT_TRANSFER_MUSE_TOKENIZER";

/// Optional check on a real dictionary: decay shape and coverage range.
fn muse_shape() -> Option<Outcome> {
    let dict_path = std::env::var_os(MUSE_DICT_ENV)?;
    let tok_path = std::env::var_os(MUSE_TOKENIZER_ENV)?;
    Some((|| {
        let dict = parse_dictionary(Path::new(&dict_path), DictFormat::SpacePair).map_err(|e| e.to_string())?;
        let dict = normalize(&dict, false);
        let text = fs::read_to_string(&tok_path).map_err(|e| e.to_string())?;
        let src = BpeTokenizer::from_file_str(&text)
            .or_else(|_| dict_transfer::bpe::from_hf_tokenizer_json(&text))
            .map_err(|e| e.to_string())?;
        let tgt = BpeTrainer::new(src.vocab_size())
            .train(dict.entries())
            .map_err(|e| e.to_string())?;
        let run = run_mapping(&src, &tgt, &dict, &MappingConfig::default()).map_err(|e| e.to_string())?;
        let rows = &run.report.per_iteration;
        let total = run.report.mapped_total.max(1) as f64;
        let first = rows.first().map_or(0, |r| r.1) as f64 / total;
        let fourth = rows.get(3).map_or(0, |r| r.1);
        ensure!(first > 0.99, "iteration 1 holds {:.2} % of mappings", first * 100.0);
        ensure!(fourth == 0, "iteration 4 mapped {fourth}");
        ensure!(
            (0.8..=1.0).contains(&run.report.coverage),
            "coverage {}",
            run.report.coverage_percent()
        );
        Ok(format!("per iteration {rows:?}, coverage {}", run.report.coverage_percent()))
    })())
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Check)> = vec![
        ("bpe-round-trip", Box::new(|| Some(bpe_round_trip()))),
        ("bpe-oracle-equivalence", Box::new(|| Some(bpe_oracle_equivalence()))),
        ("fallback-soundness", Box::new(|| Some(fallback_soundness()))),
        ("em-correctness", Box::new(|| Some(em_correctness()))),
        ("mapping-fixpoint", Box::new(|| Some(fixpoint()))),
        ("embedding-math", Box::new(|| Some(embedding_math()))),
        ("determinism", Box::new(|| Some(determinism()))),
        ("ablation-no-removal", Box::new(|| Some(ablation()))),
        ("muse-decay-shape", Box::new(muse_shape)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let verdict = match check() {
            Some(Ok(detail)) => Verdict::Pass(detail),
            Some(Err(why)) => Verdict::Fail(why),
            None => Verdict::Skip(format!("set {MUSE_DICT_ENV} and {MUSE_TOKENIZER_ENV} to run")),
        };
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Verdict::Pass(d) => println!("PASS  {name:<24} {d} [{secs:.2}s]"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL  {name:<24} {d} [{secs:.2}s]");
            }
            Verdict::Skip(d) => println!("SKIP  {name:<24} {d}"),
        }
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
