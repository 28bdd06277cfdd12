//! Synthetic paired corpus, prompt-drop augmentation, length-bucketed batch
//! planning, and the line-delimited shard format.

mod batch;
mod corpus;
mod shard;

pub use batch::{plan_batches, BatchPlan};
pub use corpus::{
    apply_prompt_drop, build_synthetic_corpus, CorpusRecord, FRAMES_PER_BYTE, INSTRUCTION_RATE,
    PROMPT_FRAMES,
};
pub use shard::{
    read_corpus, read_shard, sha256_hex, write_corpus, write_shard, Corpus, Manifest, ShardInfo,
    CODEBOOK_FILE, MANIFEST_FILE,
};

/// Default prompt-drop probability during training.
pub const DEFAULT_PROMPT_DROP: f64 = 0.1;
