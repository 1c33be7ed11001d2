use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use dict_transfer::align::to_pharaoh;
use dict_transfer::bpe::{from_gpt2_files, from_hf_tokenizer_json};
use dict_transfer::dictio::{normalize, parse_dictionary};
use dict_transfer::embed::{
    init_target_matrix, load_embeddings, replace_embeddings_manifest, SourceModelMeta,
};
use dict_transfer::mapping::{load_mapping, report as mapping_report, run_mapping_with, save_mapping};
use dict_transfer::{
    BpeTokenizer, BpeTrainer, DictionaryCorpus, InitPolicy, MappingConfig, Provenance,
};

use crate::config::{ConfigFile, PipelineArgs, PipelineConfig};
use crate::Failure;

pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const MAPPING_FILE: &str = "mapping.json";
pub const REPORT_FILE: &str = "report.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const MANIFEST_FILE: &str = "manifest.tsv";

type CmdResult = Result<(), Failure>;

fn load_dictionary(cfg: &PipelineConfig) -> Result<DictionaryCorpus, Failure> {
    let path = cfg.dict_path()?;
    let dict = parse_dictionary(path, cfg.format)
        .with_context(|| format!("dictionary stage: {}", path.display()))?;
    let dict = normalize(&dict, cfg.lowercase);
    if dict.is_empty() {
        return Err(anyhow!("dictionary stage: {} has no entries", path.display()).into());
    }
    log::info!("loaded {} dictionary pairs", dict.len());
    Ok(dict)
}

fn load_tokenizer(path: &Path) -> anyhow::Result<BpeTokenizer> {
    BpeTokenizer::load(path).with_context(|| format!("loading tokenizer {}", path.display()))
}

fn train_target(cfg: &PipelineConfig, dict: &DictionaryCorpus, budget: usize) -> anyhow::Result<BpeTokenizer> {
    let tok = BpeTrainer::new(budget)
        .min_frequency(cfg.min_frequency)
        .special_tokens(cfg.special_tokens.iter().map(String::as_bytes))
        .train(dict.entries())
        .context("tokenizer training stage")?;
    log::info!("trained target tokenizer: {} tokens, {} merges", tok.vocab_size(), tok.merge_count());
    Ok(tok)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn train_tokenizer(args: &PipelineArgs, file: &ConfigFile, out: Option<PathBuf>) -> CmdResult {
    let cfg = PipelineConfig::resolve(args, file)?;
    let out = match out {
        Some(p) => p,
        None => cfg.out_dir()?.join(TOKENIZER_FILE),
    };
    let source = match &cfg.source_tokenizer {
        Some(_) if cfg.vocab_budget.is_none() => Some(load_tokenizer(cfg.source_tokenizer_path()?)?),
        _ => None,
    };
    let budget = cfg.budget(source.as_ref())?;
    let dict = load_dictionary(&cfg)?;
    let tok = train_target(&cfg, &dict, budget)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_file(&out, tok.to_file_string())?;
    println!("vocab size       {}", tok.vocab_size());
    println!("merges           {}", tok.merge_count());
    println!("written          {}", out.display());
    Ok(())
}

pub fn transfer(args: &PipelineArgs, file: &ConfigFile) -> CmdResult {
    let cfg = PipelineConfig::resolve(args, file)?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let src_tok_path = cfg.source_tokenizer_path()?;
    let src_emb_path = cfg.source_embeddings_path()?;
    let dict = load_dictionary(&cfg)?;

    let src_tok = load_tokenizer(src_tok_path).context("source tokenizer stage")?;
    let src_emb = load_embeddings(src_emb_path)
        .with_context(|| format!("source embeddings stage: {}", src_emb_path.display()))?;
    if src_emb.rows() != src_tok.vocab_size() {
        return Err(anyhow!(
            "source embeddings stage: {} rows but the source tokenizer has {} tokens",
            src_emb.rows(),
            src_tok.vocab_size()
        )
        .into());
    }

    let budget = cfg.budget(Some(&src_tok))?;
    let tgt_tok = train_target(&cfg, &dict, budget)?;

    let map_cfg = MappingConfig {
        align: cfg.align.clone(),
        removal: cfg.removal,
        max_loops: cfg.max_loops,
    };
    let mut dumps = Vec::new();
    let run = run_mapping_with(&src_tok, &tgt_tok, &dict, &map_cfg, |view| {
        if cfg.dump_alignments {
            dumps.push((view.iteration, to_pharaoh(view.links)));
        }
    })
    .context("mapping stage")?;
    if run.report.truncated {
        log::warn!("mapping stopped at max_loops = {} before converging", cfg.max_loops);
    }

    let policy = InitPolicy {
        unk_token: cfg.unk_token.as_ref().map(|u| u.as_bytes().to_vec()),
        rng_seed: cfg.seed,
        specials: cfg.special_tokens.iter().map(|s| s.as_bytes().to_vec()).collect(),
        ..InitPolicy::default()
    };
    let init = init_target_matrix(&src_emb, &src_tok, &tgt_tok, &run.map, &policy)
        .context("embedding initialization stage")?;

    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let rendered = run.report.render();
    write_file(&out_dir.join(TOKENIZER_FILE), tgt_tok.to_file_string())?;
    save_mapping(&out_dir.join(MAPPING_FILE), &run.map, tgt_tok.vocab_size()).context("writing mapping")?;
    write_file(&out_dir.join(REPORT_FILE), &rendered)?;
    let meta = SourceModelMeta {
        embeddings: src_emb_path.display().to_string(),
        tokenizer: src_tok_path.display().to_string(),
        vocab_size: src_tok.vocab_size(),
        dim: src_emb.dim(),
    };
    replace_embeddings_manifest(
        &meta,
        &init,
        &tgt_tok,
        &out_dir.join(EMBEDDINGS_FILE),
        &out_dir.join(MANIFEST_FILE),
    )
    .context("writing embeddings")?;
    if !dumps.is_empty() {
        let dir = out_dir.join("alignments");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (it, text) in dumps {
            write_file(&dir.join(format!("iter_{it}.pharaoh")), text)?;
        }
    }

    print!("{rendered}");
    println!();
    println!("{:>9}  {:>10}", "init", "rows");
    for p in [Provenance::Copied, Provenance::Averaged, Provenance::Unk, Provenance::Random] {
        println!("{:>9}  {:>10}", p.as_str(), init.count(p));
    }
    Ok(())
}

/// Documents, whitespace words, subwords, and subwords per word.
pub fn count_table(tok: &BpeTokenizer, text: &str) -> String {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let words: usize = lines.iter().map(|l| l.split_whitespace().count()).sum();
    let subwords = tok.count_subwords(&lines);
    let ratio = if words == 0 {
        "n/a".to_string()
    } else {
        format!("{:.4}", subwords as f64 / words as f64)
    };
    let mut out = String::new();
    for (k, v) in [
        ("documents", lines.len().to_string()),
        ("words", words.to_string()),
        ("subwords", subwords.to_string()),
        ("subwords/word", ratio),
    ] {
        let _ = writeln!(out, "{k:<16} {v}");
    }
    out
}

pub fn count(corpus: &Path, tokenizer: &Path) -> CmdResult {
    let tok = load_tokenizer(tokenizer)?;
    let text = fs::read_to_string(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    print!("{}", count_table(&tok, &text));
    Ok(())
}

pub fn report(mapping: &Path) -> CmdResult {
    let (map, vocab_size) = load_mapping(mapping).with_context(|| format!("reading {}", mapping.display()))?;
    print!("{}", mapping_report(&map, vocab_size).render());
    Ok(())
}

pub fn convert_tokenizer(
    vocab: Option<PathBuf>,
    merges: Option<PathBuf>,
    hf_json: Option<PathBuf>,
    out: &Path,
) -> CmdResult {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let tok = match (vocab, merges, hf_json) {
        (Some(v), Some(m), None) => from_gpt2_files(&read(&v)?, &read(&m)?).context("converting vocab/merges")?,
        (None, None, Some(h)) => from_hf_tokenizer_json(&read(&h)?).context("converting tokenizer.json")?,
        _ => return Err(Failure::usage("give either --vocab with --merges, or --hf-json")),
    };
    write_file(out, tok.to_file_string())?;
    println!("vocab size       {}", tok.vocab_size());
    println!("merges           {}", tok.merge_count());
    println!("written          {}", out.display());
    Ok(())
}
