use serde::{Deserialize, Serialize};

use crate::codec::{audio_encode, synth_reference_audio, text_encode, Codebook, Role, TokenId};
use crate::codec::TokenSequence;
use crate::error::{Error, Result};
use crate::lm::{packed_len, TrainingExample};
use crate::numerics::SeededRng;

/// Speech frames generated per UTF-8 byte of text.
pub const FRAMES_PER_BYTE: usize = 4;
/// Inclusive range of reference-prompt lengths, in frames.
pub const PROMPT_FRAMES: (usize, usize) = (4, 12);
/// Probability that a synthetic record is an instruction.
pub const INSTRUCTION_RATE: f64 = 0.25;

const LATIN: &[&str] = &[
    "hi", "sun", "rain", "blue", "cat", "tea", "go", "home", "moon", "wind", "red", "day", "sea",
    "now", "yes", "ok",
];
const HAN: &[&str] = &["你好", "天", "雨", "猫", "茶", "月", "风", "海", "早", "好"];

/// One paired text/speech item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub text: String,
    pub instruction: bool,
    #[serde(rename = "prompt")]
    pub prompt_speech_ids: Vec<TokenId>,
    #[serde(rename = "target")]
    pub target_speech_ids: Vec<TokenId>,
    pub provenance: String,
}

impl CorpusRecord {
    pub fn text_tokens(&self) -> usize {
        self.text.len() + self.instruction as usize
    }

    /// Length of the assembled model input for this record.
    pub fn packed_len(&self) -> usize {
        packed_len(
            self.text_tokens(),
            self.prompt_speech_ids.len(),
            self.target_speech_ids.len(),
        )
    }

    /// Text, prompt, and target tokens together.
    pub fn token_count(&self) -> usize {
        self.text_tokens() + self.prompt_speech_ids.len() + self.target_speech_ids.len()
    }

    pub fn validate(&self, speech_vocab: usize) -> Result<()> {
        if self.target_speech_ids.is_empty() {
            return Err(Error::Data(format!("record {}: empty target", self.provenance)));
        }
        let all = self.prompt_speech_ids.iter().chain(&self.target_speech_ids);
        if let Some(bad) = all.into_iter().find(|&&id| id as usize >= speech_vocab) {
            return Err(Error::Data(format!(
                "record {}: speech id {bad} outside codebook of {speech_vocab}",
                self.provenance
            )));
        }
        Ok(())
    }

    pub fn to_example(&self, speech_vocab: usize) -> Result<TrainingExample> {
        let wrap = |e: Error| Error::Data(format!("record {}: {e}", self.provenance));
        TrainingExample::new(
            text_encode(&self.text, self.instruction),
            TokenSequence::speech(Role::PromptSpeech, self.prompt_speech_ids.clone(), speech_vocab)
                .map_err(wrap)?,
            TokenSequence::speech(Role::TargetSpeech, self.target_speech_ids.clone(), speech_vocab)
                .map_err(wrap)?,
        )
        .map_err(wrap)
    }
}

/// One to two words, each Latin or Han, joined by a space.
fn synth_text(rng: &mut SeededRng) -> String {
    let words = 1 + rng.below(2);
    (0..words)
        .map(|_| {
            if rng.bernoulli(0.5) {
                LATIN[rng.below(LATIN.len())]
            } else {
                HAN[rng.below(HAN.len())]
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic paired corpus.
///
/// Each record draws a text from a small mixed-script grammar and a fresh
/// speaker; one continuous reference recording of that speaker is quantized
/// and split into the prompt and a target of `FRAMES_PER_BYTE` frames per
/// text byte.
pub fn build_synthetic_corpus(
    seed: u64,
    n_records: usize,
    book: &Codebook,
) -> Result<Vec<CorpusRecord>> {
    if n_records == 0 {
        return Err(Error::Parameter("corpus needs at least one record".into()));
    }
    (0..n_records)
        .map(|i| {
            let mut rng = SeededRng::new(seed).split(i as u64);
            let text = synth_text(&mut rng);
            let instruction = rng.bernoulli(INSTRUCTION_RATE);
            let prompt_len = PROMPT_FRAMES.0 + rng.below(PROMPT_FRAMES.1 - PROMPT_FRAMES.0 + 1);
            let target_len = FRAMES_PER_BYTE * text.len();
            let speaker = rng.next_u64();
            let frames = synth_reference_audio(speaker, prompt_len + target_len, book.dim())?;
            let ids = audio_encode(&frames, book, Role::TargetSpeech)?.into_ids();
            let (prompt, target) = ids.split_at(prompt_len);
            Ok(CorpusRecord {
                text,
                instruction,
                prompt_speech_ids: prompt.to_vec(),
                target_speech_ids: target.to_vec(),
                provenance: format!("synthetic:{seed}:{i}"),
            })
        })
        .collect()
}

/// With probability `p` the prompt is removed; text and target are kept.
pub fn apply_prompt_drop(
    record: &CorpusRecord,
    p: f64,
    rng: &mut SeededRng,
) -> Result<CorpusRecord> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("prompt-drop probability {p} outside [0, 1]")));
    }
    let mut out = record.clone();
    if rng.bernoulli(p) {
        out.prompt_speech_ids.clear();
    }
    Ok(out)
}
