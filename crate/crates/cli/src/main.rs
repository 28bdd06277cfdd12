use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use voxrnn::decoder::GenerationConfig;
use voxrnn_cli::bench::{render_report, run_bench, BenchSettings};
use voxrnn_cli::config::{resolve_seed, RunConfig};
use voxrnn_cli::generate::{run_generate, strategy, GenerateArgs, RefAudio};
use voxrnn_cli::prepare::{run_prepare, PrepareArgs};
use voxrnn_cli::report::{ScoreTable, BUNDLED_SCORES};
use voxrnn_cli::train::{run_train, TrainArgs};

/// Recurrent text-to-speech-token toolkit.
///
/// The VOXRNN_SEED environment variable, when set, overrides every --seed.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic paired corpus: shards, codebook, and manifest.
    Prepare {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        records: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1024)]
        per_shard: usize,
    },
    /// Train a model on a prepared corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML run configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Loss log path (default: <out>.loss.log).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Generate speech tokens and a waveform for a text.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        text: String,
        /// Prompt: `none`, `seed:N[:FRAMES]`, or comma-separated token ids.
        #[arg(long, default_value = "none")]
        ref_audio: String,
        /// WAV output path; token ids go to <out>.tokens.
        #[arg(long)]
        out: PathBuf,
        /// Mark the text as an instruction.
        #[arg(long)]
        instruction: bool,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        max_tokens: usize,
        #[arg(long, default_value_t = 1)]
        min_tokens: usize,
        /// greedy, top-k, or top-p.
        #[arg(long, default_value = "greedy")]
        strategy: String,
        #[arg(long, default_value_t = 50)]
        top_k: usize,
        #[arg(long, default_value_t = 0.9)]
        top_p: f64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time per-token decoding against a causal-attention baseline.
    Bench {
        /// TOML run configuration (model section); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        reps: usize,
        #[arg(long, default_value_t = 4)]
        warmup: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a score table with per-metric maxima flagged.
    Report {
        /// Score file; the bundled table when omitted.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Prepare {
            seed,
            records,
            out: dir,
            per_shard,
        } => {
            let seed = resolve_seed(Some(seed))?.unwrap_or(seed);
            run_prepare(&PrepareArgs { seed, records, out: dir, per_shard }, out)?;
        }
        Command::Train {
            data,
            config,
            out: ckpt,
            seed,
            steps,
            log,
        } => {
            let args = TrainArgs {
                data,
                config,
                out: ckpt,
                seed: resolve_seed(seed)?,
                steps,
                log,
            };
            run_train(&args, out)?;
        }
        Command::Generate {
            ckpt,
            text,
            ref_audio,
            out: wav,
            instruction,
            codebook,
            max_tokens,
            min_tokens,
            strategy: name,
            top_k,
            top_p,
            temperature,
            seed,
        } => {
            let decoding = GenerationConfig {
                strategy: strategy(&name, top_k, top_p).map_err(anyhow::Error::msg)?,
                temperature,
                max_tokens,
                min_tokens,
                seed: resolve_seed(Some(seed))?.unwrap_or(seed),
            };
            decoding.validate()?;
            let args = GenerateArgs {
                ckpt,
                text,
                instruction,
                ref_audio: ref_audio.parse::<RefAudio>().map_err(anyhow::Error::msg)?,
                out: wav,
                codebook,
                decoding,
            };
            run_generate(&args, out)?;
        }
        Command::Bench {
            config,
            lengths,
            reps,
            warmup,
            seed,
            out: path,
        } => {
            let config = RunConfig::load_or_default(config.as_deref())?;
            let settings = BenchSettings {
                lengths,
                reps,
                warmup,
                seed: resolve_seed(seed)?.unwrap_or(config.seed),
                speech_vocab: config.model.speech_vocab.unwrap_or(1024),
            };
            let table = render_report(&run_bench(config.block_config()?, &settings)?);
            write!(out, "{table}")?;
            if let Some(path) = path {
                std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Report { scores } => {
            let text = match &scores {
                Some(path) => std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?,
                None => BUNDLED_SCORES.to_string(),
            };
            let table = ScoreTable::parse(&text)
                .with_context(|| format!("in {}", scores.as_ref().map_or("bundled scores".into(), |p| p.display().to_string())))?;
            write!(out, "{}", table.render())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
