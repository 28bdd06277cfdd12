use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusRecord;
use crate::codec::Codebook;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CODEBOOK_FILE: &str = "codebook.vxcb";
const MANIFEST_VERSION: u32 = 1;

/// One shard entry of a [`Manifest`]; `path` is relative to the corpus dir.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub path: String,
    pub records: usize,
    pub tokens: usize,
}

/// Index of a prepared corpus directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub codec_file: String,
    pub codec_sha256: String,
    pub speech_vocab: usize,
    pub shards: Vec<ShardInfo>,
}

impl Manifest {
    pub fn total_records(&self) -> usize {
        self.shards.iter().map(|s| s.records).sum()
    }

    pub fn total_tokens(&self) -> usize {
        self.shards.iter().map(|s| s.tokens).sum()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes one record per line.
pub fn write_shard(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let ctx = || format!("writing shard {}", path.display());
    let file = fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_shard(path: &Path) -> Result<Vec<CorpusRecord>> {
    let ctx = || format!("reading shard {}", path.display());
    let file = fs::File::open(path).map_err(|e| Error::io(ctx(), e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(ctx(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Writes the codebook, shards of at most `per_shard` records, and the
/// manifest into `dir`.
pub fn write_corpus(
    dir: &Path,
    records: &[CorpusRecord],
    book: &Codebook,
    per_shard: usize,
) -> Result<Manifest> {
    if per_shard == 0 {
        return Err(Error::Parameter("records per shard must be at least 1".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let codec_bytes = book.to_bytes();
    let codec_path = dir.join(CODEBOOK_FILE);
    fs::write(&codec_path, &codec_bytes)
        .map_err(|e| Error::io(format!("writing {}", codec_path.display()), e))?;
    let mut shards = Vec::new();
    for (i, chunk) in records.chunks(per_shard).enumerate() {
        let name = format!("shard-{i:05}.jsonl");
        write_shard(&dir.join(&name), chunk)?;
        shards.push(ShardInfo {
            path: name,
            records: chunk.len(),
            tokens: chunk.iter().map(CorpusRecord::token_count).sum(),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        codec_file: CODEBOOK_FILE.into(),
        codec_sha256: sha256_hex(&codec_bytes),
        speech_vocab: book.n_codes(),
        shards,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(manifest)
}

/// Corpus directory contents after integrity checks.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub book: Codebook,
    pub records: Vec<CorpusRecord>,
}

/// Loads a directory written by [`write_corpus`], verifying the codebook hash,
/// per-shard counts and every record's ids.
pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let path = dir.join(MANIFEST_FILE);
    let text =
        fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Data(format!("unsupported manifest version {}", manifest.version)));
    }
    let codec_path = dir.join(&manifest.codec_file);
    let bytes = fs::read(&codec_path)
        .map_err(|e| Error::io(format!("reading {}", codec_path.display()), e))?;
    if sha256_hex(&bytes) != manifest.codec_sha256 {
        return Err(Error::Data(format!("{} does not match manifest hash", codec_path.display())));
    }
    let book = Codebook::read_from(&bytes[..])?;
    if book.n_codes() != manifest.speech_vocab {
        return Err(Error::Config(format!(
            "manifest speech vocabulary {} but codebook has {} codes",
            manifest.speech_vocab,
            book.n_codes()
        )));
    }
    let mut records = Vec::new();
    for shard in &manifest.shards {
        let got = read_shard(&dir.join(&shard.path))?;
        if got.len() != shard.records {
            return Err(Error::Data(format!(
                "{}: manifest lists {} records, found {}",
                shard.path,
                shard.records,
                got.len()
            )));
        }
        for r in &got {
            r.validate(book.n_codes())?;
        }
        records.extend(got);
    }
    Ok(Corpus {
        dir: dir.to_path_buf(),
        manifest,
        book,
        records,
    })
}
