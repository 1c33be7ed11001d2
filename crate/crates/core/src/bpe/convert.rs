//! Conversion from the common byte-level vocab + merges serialization, where
//! each byte is spelled as a printable character (`Ġ` for space and so on).

use std::collections::HashMap;

use serde_json::Value;

use super::{BpeError, BpeTokenizer};

/// The printable character assigned to each byte value by GPT-2 style
/// byte-level tokenizers.
pub fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut next = 256u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            let c = char::from_u32(next).expect("valid scalar");
            next += 1;
            c
        };
    }
    table
}

fn unicode_to_bytes() -> HashMap<char, u8> {
    bytes_to_unicode()
        .iter()
        .enumerate()
        .map(|(b, &c)| (c, b as u8))
        .collect()
}

fn decode_symbol(table: &HashMap<char, u8>, token: &str) -> Option<Vec<u8>> {
    token.chars().map(|c| table.get(&c).copied()).collect()
}

fn fmt_err(msg: impl Into<String>) -> BpeError {
    BpeError::Format(msg.into())
}

/// `special` marks tokens whose text is taken verbatim rather than decoded
/// through the byte table.
fn build(
    entries: Vec<(String, u64, bool)>,
    merges: Vec<(String, String)>,
) -> Result<BpeTokenizer, BpeError> {
    let table = unicode_to_bytes();
    let mut slots: Vec<Option<Vec<u8>>> = Vec::new();
    for (text, id, special) in entries {
        let id = usize::try_from(id).map_err(|_| fmt_err(format!("id {id} out of range")))?;
        let bytes = if special {
            text.as_bytes().to_vec()
        } else {
            decode_symbol(&table, &text)
                .or_else(|| is_marker(&text).then(|| text.as_bytes().to_vec()))
                .ok_or_else(|| fmt_err(format!("vocab entry `{text}` is not byte-level encoded")))?
        };
        if slots.len() <= id {
            slots.resize(id + 1, None);
        }
        if slots[id].is_some() {
            return Err(fmt_err(format!("id {id} assigned twice")));
        }
        slots[id] = Some(bytes);
    }
    let vocab = slots
        .into_iter()
        .enumerate()
        .map(|(id, s)| s.ok_or_else(|| fmt_err(format!("ids are not dense: {id} is unused"))))
        .collect::<Result<Vec<_>, _>>()?;

    let merges = merges
        .into_iter()
        .enumerate()
        .map(|(rank, (l, r))| {
            let l = decode_symbol(&table, &l).ok_or_else(|| fmt_err(format!("merge {rank}: bad symbol `{l}`")))?;
            let r = decode_symbol(&table, &r).ok_or_else(|| fmt_err(format!("merge {rank}: bad symbol `{r}`")))?;
            Ok((l, r))
        })
        .collect::<Result<Vec<_>, BpeError>>()?;
    BpeTokenizer::from_parts(vocab, merges)
}

// Control tokens like `<|endoftext|>` or `<unk>` sometimes sit in vocab.json
// without being listed as added tokens.
fn is_marker(text: &str) -> bool {
    text.len() > 2 && text.starts_with('<') && text.ends_with('>')
}

fn parse_merge_line(rank: usize, line: &str) -> Result<(String, String), BpeError> {
    let (l, r) = line
        .split_once(' ')
        .ok_or_else(|| fmt_err(format!("merge {rank}: expected `left right`, got `{line}`")))?;
    Ok((l.to_string(), r.to_string()))
}

/// Converts a `vocab.json` (token -> id) and `merges.txt` pair.
pub fn from_gpt2_files(vocab_json: &str, merges_txt: &str) -> Result<BpeTokenizer, BpeError> {
    let vocab: HashMap<String, u64> =
        serde_json::from_str(vocab_json).map_err(|e| fmt_err(format!("vocab.json: {e}")))?;
    let entries = vocab.into_iter().map(|(t, id)| (t, id, false)).collect();
    let merges = merges_txt
        .lines()
        .filter(|l| !l.starts_with("#version") && !l.trim().is_empty())
        .enumerate()
        .map(|(rank, line)| parse_merge_line(rank, line))
        .collect::<Result<Vec<_>, _>>()?;
    build(entries, merges)
}

/// Converts a `tokenizer.json` with a byte-level BPE model. Added tokens are
/// kept with their literal UTF-8 bytes.
pub fn from_hf_tokenizer_json(text: &str) -> Result<BpeTokenizer, BpeError> {
    let root: Value = serde_json::from_str(text).map_err(|e| fmt_err(format!("tokenizer.json: {e}")))?;
    let model = &root["model"];
    if let Some(kind) = model["type"].as_str() {
        if kind != "BPE" {
            return Err(fmt_err(format!("model type `{kind}` is not BPE")));
        }
    }
    let vocab = model["vocab"]
        .as_object()
        .ok_or_else(|| fmt_err("model.vocab missing"))?;
    let mut entries = Vec::with_capacity(vocab.len());
    let mut seen_ids = HashMap::new();
    for (token, id) in vocab {
        let id = id.as_u64().ok_or_else(|| fmt_err(format!("id of `{token}` is not an integer")))?;
        seen_ids.insert(id, entries.len());
        entries.push((token.clone(), id, false));
    }
    if let Some(added) = root["added_tokens"].as_array() {
        for tok in added {
            let (Some(id), Some(content)) = (tok["id"].as_u64(), tok["content"].as_str()) else {
                return Err(fmt_err("added_tokens entry without id/content"));
            };
            match seen_ids.get(&id) {
                Some(&i) => entries[i] = (content.to_string(), id, true),
                None => entries.push((content.to_string(), id, true)),
            }
        }
    }
    let merges = model["merges"]
        .as_array()
        .ok_or_else(|| fmt_err("model.merges missing"))?
        .iter()
        .enumerate()
        .map(|(rank, m)| match m {
            Value::String(s) => parse_merge_line(rank, s),
            Value::Array(parts) => match parts.as_slice() {
                [Value::String(l), Value::String(r)] => Ok((l.clone(), r.clone())),
                _ => Err(fmt_err(format!("merge {rank}: expected two strings"))),
            },
            _ => Err(fmt_err(format!("merge {rank}: unexpected value"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    build(entries, merges)
}
