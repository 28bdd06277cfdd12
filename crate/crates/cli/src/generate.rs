use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use voxrnn::codec::{
    audio_encode, render_waveform, synth_reference_audio, text_encode, write_wav, Codebook, Role,
    TokenId, TokenSequence,
};
use voxrnn::decoder::{generate, GenerationConfig, GenerationResult, Strategy};
use voxrnn::trainer::Checkpoint;

use crate::train::sibling;

/// Prompt frames synthesized for `seed:N` references without a length.
pub const DEFAULT_REFERENCE_FRAMES: usize = 8;

/// Where the speech prompt comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefAudio {
    /// No prompt.
    None,
    /// Codeword ids given directly.
    Tokens(Vec<TokenId>),
    /// Synthetic reference recording of this speaker seed, quantized.
    Seed { seed: u64, frames: usize },
}

impl FromStr for RefAudio {
    type Err = String;

    /// `none`, `seed:N`, `seed:N:FRAMES`, or ids separated by commas or
    /// whitespace.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::None);
        }
        if let Some(rest) = s.strip_prefix("seed:") {
            let mut parts = rest.split(':');
            let seed = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| format!("bad speaker seed in {s:?}"))?;
            let frames = match parts.next() {
                Some(f) => f.parse().map_err(|_| format!("bad frame count in {s:?}"))?,
                None => DEFAULT_REFERENCE_FRAMES,
            };
            if parts.next().is_some() || frames == 0 {
                return Err(format!("expected seed:N or seed:N:FRAMES, got {s:?}"));
            }
            return Ok(Self::Seed { seed, frames });
        }
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| format!("{p:?} is not a token id")))
            .collect::<Result<_, _>>()
            .map(Self::Tokens)
    }
}

impl RefAudio {
    pub fn to_prompt(&self, book: &Codebook) -> voxrnn::Result<TokenSequence> {
        match self {
            Self::None => Ok(TokenSequence::empty(Role::PromptSpeech)),
            Self::Tokens(ids) => TokenSequence::speech(Role::PromptSpeech, ids.clone(), book.n_codes()),
            Self::Seed { seed, frames } => {
                let audio = synth_reference_audio(*seed, *frames, book.dim())?;
                audio_encode(&audio, book, Role::PromptSpeech)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenerateArgs {
    pub ckpt: PathBuf,
    pub text: String,
    pub instruction: bool,
    pub ref_audio: RefAudio,
    pub out: PathBuf,
    /// Codebook file; the default codebook when absent.
    pub codebook: Option<PathBuf>,
    pub decoding: GenerationConfig,
}

/// Decodes speech ids for `text` and writes the waveform to `out` and the
/// ids (space separated) to `<out>.tokens`.
pub fn run_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<GenerationResult> {
    let model = Checkpoint::load(&args.ckpt)?.model;
    let book = match &args.codebook {
        Some(path) => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            Codebook::read_from(std::io::BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?
        }
        None => Codebook::default_book(),
    };
    if book.n_codes() != model.config.speech_vocab {
        return Err(voxrnn::Error::Config(format!(
            "checkpoint expects {} speech tokens but the codebook has {}",
            model.config.speech_vocab,
            book.n_codes()
        ))
        .into());
    }
    let text = text_encode(&args.text, args.instruction);
    let prompt = args.ref_audio.to_prompt(&book)?;
    let result = generate(&model, &text, &prompt, &args.decoding, None)?;

    write_wav(&args.out, &render_waveform(&result.speech_ids, &book)?)?;
    let tokens_path = sibling(&args.out, ".tokens");
    let dump: Vec<String> = result.speech_ids.iter().map(|id| id.to_string()).collect();
    std::fs::write(&tokens_path, dump.join(" ") + "\n")
        .with_context(|| format!("writing {}", tokens_path.display()))?;

    let total: f64 = result.per_token_latency.iter().map(|d| d.as_secs_f64()).sum();
    writeln!(out, "tokens {}", result.speech_ids.len())?;
    writeln!(out, "stop {:?}", result.stop_reason)?;
    writeln!(out, "state_bytes {}", result.state_bytes)?;
    if !result.per_token_latency.is_empty() {
        let per = total * 1e6 / result.per_token_latency.len() as f64;
        writeln!(out, "mean_us_per_token {per:.1}")?;
    }
    writeln!(out, "wrote {} and {}", args.out.display(), tokens_path.display())?;
    Ok(result)
}

/// Parses a `--strategy` name with its parameter.
pub fn strategy(name: &str, top_k: usize, top_p: f64) -> Result<Strategy, String> {
    match name {
        "greedy" => Ok(Strategy::Greedy),
        "top-k" => Ok(Strategy::TopK(top_k)),
        "top-p" => Ok(Strategy::TopP(top_p)),
        other => Err(format!("unknown strategy {other:?} (greedy, top-k, top-p)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_forms() {
        assert_eq!("".parse::<RefAudio>().unwrap(), RefAudio::None);
        assert_eq!("1, 2 3".parse::<RefAudio>().unwrap(), RefAudio::Tokens(vec![1, 2, 3]));
        assert_eq!(
            "seed:4".parse::<RefAudio>().unwrap(),
            RefAudio::Seed { seed: 4, frames: DEFAULT_REFERENCE_FRAMES }
        );
        assert_eq!("seed:4:20".parse::<RefAudio>().unwrap(), RefAudio::Seed { seed: 4, frames: 20 });
        assert!("seed:x".parse::<RefAudio>().is_err());
        assert!("seed:1:0".parse::<RefAudio>().is_err());
        assert!("1,a".parse::<RefAudio>().is_err());
    }

    #[test]
    fn seeded_reference_is_quantized() {
        let book = Codebook::default_book();
        let p = RefAudio::Seed { seed: 9, frames: 6 }.to_prompt(&book).unwrap();
        assert_eq!(p.len(), 6);
        assert!(RefAudio::Tokens(vec![1024]).to_prompt(&book).is_err());
    }
}
