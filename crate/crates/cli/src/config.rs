//! Pipeline configuration: a flat TOML file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dict_transfer::align::AlignConfig;
use dict_transfer::mapping::DEFAULT_MAX_LOOPS;
use dict_transfer::{BpeTokenizer, DictFormat};
use serde::Deserialize;

use crate::Failure;

/// Keys accepted in the config file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dict: Option<PathBuf>,
    pub format: Option<String>,
    pub lowercase: Option<bool>,
    pub source_tokenizer: Option<PathBuf>,
    pub source_embeddings: Option<PathBuf>,
    pub vocab_budget: Option<usize>,
    pub min_frequency: Option<u64>,
    pub model1_iterations: Option<usize>,
    pub diagonal_iterations: Option<usize>,
    pub lambda: Option<f64>,
    pub p0: Option<f64>,
    pub removal: Option<bool>,
    pub max_loops: Option<usize>,
    pub unk_token: Option<String>,
    pub special_tokens: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dump_alignments: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ConfigFile = toml::from_str(&text)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.dict,
            &mut cfg.source_tokenizer,
            &mut cfg.source_embeddings,
            &mut cfg.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by the pipeline commands. Each one overrides the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct PipelineArgs {
    /// Bilingual dictionary (entry, then definition).
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Dictionary format: `tab` or `space-pair`.
    #[arg(long)]
    pub format: Option<String>,
    /// Lowercase both dictionary fields after NFC normalization.
    #[arg(long)]
    pub lowercase: bool,
    /// Source model tokenizer file.
    #[arg(long)]
    pub source_tokenizer: Option<PathBuf>,
    /// Source model embedding matrix (binary or text).
    #[arg(long)]
    pub source_embeddings: Option<PathBuf>,
    /// Target vocabulary size. Defaults to the source tokenizer's size.
    #[arg(long)]
    pub vocab_budget: Option<usize>,
    /// Minimum pair frequency for a BPE merge.
    #[arg(long)]
    pub min_frequency: Option<u64>,
    #[arg(long)]
    pub model1_iterations: Option<usize>,
    #[arg(long)]
    pub diagonal_iterations: Option<usize>,
    /// Diagonal tension of the alignment prior.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// NULL alignment probability.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Map in a single pass without deleting mapped subwords.
    #[arg(long)]
    pub no_removal: bool,
    #[arg(long)]
    pub max_loops: Option<usize>,
    /// Source token whose row initializes unmapped target tokens.
    #[arg(long)]
    pub unk_token: Option<String>,
    /// Special token, added to the target vocabulary and copied from the source (repeatable).
    #[arg(long = "special-token")]
    pub special_tokens: Vec<String>,
    /// Seed for random rows of unmapped tokens.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Write Pharaoh-format alignments of every loop.
    #[arg(long)]
    pub dump_alignments: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub dict: Option<PathBuf>,
    pub format: DictFormat,
    pub lowercase: bool,
    pub source_tokenizer: Option<PathBuf>,
    pub source_embeddings: Option<PathBuf>,
    pub vocab_budget: Option<usize>,
    pub min_frequency: u64,
    pub align: AlignConfig,
    pub removal: bool,
    pub max_loops: usize,
    pub unk_token: Option<String>,
    pub special_tokens: Vec<String>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub dump_alignments: bool,
}

impl PipelineConfig {
    pub fn resolve(args: &PipelineArgs, file: &ConfigFile) -> Result<Self, Failure> {
        let defaults = AlignConfig::default();
        let format_str = args.format.as_ref().or(file.format.as_ref());
        let format = match format_str {
            Some(f) => f.parse().map_err(|e| Failure::usage(format!("{e}")))?,
            None => DictFormat::Tab,
        };
        let cfg = Self {
            dict: args.dict.clone().or_else(|| file.dict.clone()),
            format,
            lowercase: args.lowercase || file.lowercase.unwrap_or(false),
            source_tokenizer: args.source_tokenizer.clone().or_else(|| file.source_tokenizer.clone()),
            source_embeddings: args.source_embeddings.clone().or_else(|| file.source_embeddings.clone()),
            vocab_budget: args.vocab_budget.or(file.vocab_budget),
            min_frequency: args
                .min_frequency
                .or(file.min_frequency)
                .unwrap_or(dict_transfer::bpe::DEFAULT_MIN_FREQUENCY),
            align: AlignConfig {
                model1_iterations: args
                    .model1_iterations
                    .or(file.model1_iterations)
                    .unwrap_or(defaults.model1_iterations),
                diagonal_iterations: args
                    .diagonal_iterations
                    .or(file.diagonal_iterations)
                    .unwrap_or(defaults.diagonal_iterations),
                lambda: args.lambda.or(file.lambda).unwrap_or(defaults.lambda),
                p0: args.p0.or(file.p0).unwrap_or(defaults.p0),
                floor: defaults.floor,
            },
            removal: !args.no_removal && file.removal.unwrap_or(true),
            max_loops: args.max_loops.or(file.max_loops).unwrap_or(DEFAULT_MAX_LOOPS),
            unk_token: args.unk_token.clone().or_else(|| file.unk_token.clone()),
            special_tokens: if args.special_tokens.is_empty() {
                file.special_tokens.clone().unwrap_or_default()
            } else {
                args.special_tokens.clone()
            },
            seed: args.seed.or(file.seed).unwrap_or(42),
            out_dir: args.out_dir.clone().or_else(|| file.out_dir.clone()),
            dump_alignments: args.dump_alignments || file.dump_alignments.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        if let Some(b) = self.vocab_budget {
            if b < 256 {
                return Err(Failure::usage(format!(
                    "vocab_budget must be at least 256 (the byte alphabet), got {b}"
                )));
            }
        }
        if self.min_frequency == 0 {
            return Err(Failure::usage("min_frequency must be at least 1"));
        }
        if self.align.total_iterations() == 0 {
            return Err(Failure::usage("at least one EM iteration is required"));
        }
        if !(self.align.lambda.is_finite() && self.align.lambda > 0.0) {
            return Err(Failure::usage(format!("lambda must be positive, got {}", self.align.lambda)));
        }
        if !(0.0..1.0).contains(&self.align.p0) {
            return Err(Failure::usage(format!("p0 must be in [0, 1), got {}", self.align.p0)));
        }
        if self.max_loops == 0 {
            return Err(Failure::usage("max_loops must be at least 1"));
        }
        if self.special_tokens.iter().any(String::is_empty) {
            return Err(Failure::usage("special tokens must be non-empty"));
        }
        Ok(())
    }

    pub fn dict_path(&self) -> Result<&Path, Failure> {
        existing("dict", self.dict.as_deref())
    }

    pub fn source_tokenizer_path(&self) -> Result<&Path, Failure> {
        existing("source_tokenizer", self.source_tokenizer.as_deref())
    }

    pub fn source_embeddings_path(&self) -> Result<&Path, Failure> {
        existing("source_embeddings", self.source_embeddings.as_deref())
    }

    pub fn out_dir(&self) -> Result<&Path, Failure> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Failure::usage("missing required setting `out_dir`"))
    }

    /// Explicit budget, else the source tokenizer's vocabulary size.
    pub fn budget(&self, source: Option<&BpeTokenizer>) -> Result<usize, Failure> {
        self.vocab_budget
            .or_else(|| source.map(BpeTokenizer::vocab_size))
            .ok_or_else(|| Failure::usage("set `vocab_budget` or provide `source_tokenizer`"))
    }
}

fn existing<'a>(key: &str, path: Option<&'a Path>) -> Result<&'a Path, Failure> {
    let path = path.ok_or_else(|| Failure::usage(format!("missing required setting `{key}`")))?;
    if !path.exists() {
        return Err(Failure::usage(format!("{key}: {} does not exist", path.display())));
    }
    Ok(path)
}
