//! Dictionary-driven vocabulary transfer.
//!
//! Train a byte-level BPE tokenizer on the headwords of a bilingual
//! dictionary, map its subwords to the subwords of a source model by
//! repeatedly aligning entries with their definitions and deleting what has
//! been mapped, then initialize target embeddings as count-weighted averages
//! of source embeddings.

pub mod align;
pub mod bpe;
pub mod dictio;
pub mod embed;
pub mod mapping;

pub use align::{AlignConfig, AlignError, AlignmentLink, AlignmentModel, EmMode, ParallelCorpus, SentencePair};
pub use bpe::{BpeError, BpeTokenizer, BpeTrainer, MergeRule, Token, TokenId};
pub use dictio::{DictError, DictFormat, DictionaryCorpus, EntryPair};
pub use embed::{EmbedError, EmbeddingMatrix, InitPolicy, Provenance, TargetInit};
pub use mapping::{
    IterationDelta, MappingConfig, MappingError, MappingRun, SourceCounts, SubwordMap, TransferReport,
};
