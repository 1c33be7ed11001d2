#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dict-transfer"));
    cmd.env_remove("DICT_TRANSFER_THREADS").env_remove("RUST_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dict-transfer")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs `transfer` on the bundled fixtures into `out_dir`.
pub fn transfer(out_dir: &Path, extra: &[&str]) -> Output {
    let dict = fixture("mini_dict.tsv");
    let tok = fixture("source_tokenizer.json");
    let emb = fixture("source_embeddings.txt");
    let mut args = vec![
        "transfer".to_string(),
        "--dict".into(),
        dict.display().to_string(),
        "--source-tokenizer".into(),
        tok.display().to_string(),
        "--source-embeddings".into(),
        emb.display().to_string(),
        "--vocab-budget".into(),
        "400".into(),
        "--unk-token".into(),
        "<unk>".into(),
        "--special-token".into(),
        "<s>".into(),
        "--special-token".into(),
        "</s>".into(),
        "--out-dir".into(),
        out_dir.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    bin().args(&args).output().expect("spawn dict-transfer")
}

pub const ARTIFACTS: [&str; 5] = [
    "tokenizer.json",
    "mapping.json",
    "report.txt",
    "embeddings.bin",
    "manifest.tsv",
];

/// The nested toy mapping: `ab` in loop 1, `a` and `b` in loop 2, nothing in loop 3.
pub const TOY_MAPPING: &str = r#"{
  "version": 1,
  "vocab_size": 259,
  "iterations": 3,
  "truncated": false,
  "entries": [
    {"token": "6162", "text": "ab", "iteration": 1, "sources": [{"token": "78", "text": "x", "count": 1}]},
    {"token": "61", "text": "a", "iteration": 2, "sources": [{"token": "78", "text": "x", "count": 1}]},
    {"token": "62", "text": "b", "iteration": 2, "sources": [{"token": "78", "text": "x", "count": 1}]}
  ]
}
"#;
