use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use voxrnn::codec::Codebook;
use voxrnn::dataprep::{build_synthetic_corpus, write_corpus, Manifest};

#[derive(Clone, Debug)]
pub struct PrepareArgs {
    pub seed: u64,
    pub records: usize,
    pub out: PathBuf,
    pub per_shard: usize,
}

/// Builds the synthetic corpus with the default codebook and writes it as
/// shards plus manifest. Prints `records`, `tokens`, and `shards` lines.
pub fn run_prepare(args: &PrepareArgs, out: &mut dyn Write) -> Result<Manifest> {
    let book = Codebook::default_book();
    let records = build_synthetic_corpus(args.seed, args.records, &book)?;
    let manifest = write_corpus(&args.out, &records, &book, args.per_shard)?;
    writeln!(out, "records {}", manifest.total_records())?;
    writeln!(out, "tokens {}", manifest.total_tokens())?;
    writeln!(out, "shards {}", manifest.shards.len())?;
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(manifest)
}
