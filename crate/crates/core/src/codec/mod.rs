//! Deterministic stand-ins for the external tokenizers: a byte-level text
//! tokenizer with reserved specials and a fixed-codebook audio quantizer.

mod audio;
mod text;
mod wave;

pub use audio::{
    audio_decode, audio_encode, synth_reference_audio, Codebook, DEFAULT_CODEBOOK_SEED,
    DEFAULT_DIM, DEFAULT_N_CODES,
};
pub use text::{text_decode, text_encode, SpecialTokens, N_SPECIALS, TEXT_VOCAB};
pub use wave::{read_wav, render_waveform, write_wav, HOP, SAMPLE_RATE};

use crate::error::{Error, Result};

/// Token id in either vocabulary.
pub type TokenId = u32;

/// Which stream a [`TokenSequence`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Text,
    PromptSpeech,
    TargetSpeech,
}

/// Role-tagged id list. Construction checks the ids against the role's
/// vocabulary, so a sequence in hand is always valid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    role: Role,
    ids: Vec<TokenId>,
}

impl TokenSequence {
    pub fn text(ids: Vec<TokenId>) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= TEXT_VOCAB) {
            return Err(Error::Data(format!(
                "text id {bad} outside vocabulary of {TEXT_VOCAB}"
            )));
        }
        Ok(Self {
            role: Role::Text,
            ids,
        })
    }

    /// Speech ids must be codewords, i.e. `< speech_vocab`; in particular the
    /// end-of-speech symbol (`== speech_vocab`) is never a valid input.
    pub fn speech(role: Role, ids: Vec<TokenId>, speech_vocab: usize) -> Result<Self> {
        if role == Role::Text {
            return Err(Error::Usage("speech sequence constructed with text role".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= speech_vocab) {
            return Err(Error::Data(format!(
                "speech id {bad} outside codebook of {speech_vocab}"
            )));
        }
        Ok(Self { role, ids })
    }

    pub fn empty(role: Role) -> Self {
        Self {
            role,
            ids: Vec::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.ids
    }

    /// Same ids under another speech role (prompt ↔ target).
    pub fn with_role(self, role: Role) -> Result<Self> {
        if (self.role == Role::Text) != (role == Role::Text) {
            return Err(Error::Usage(format!(
                "cannot relabel {:?} sequence as {role:?}",
                self.role
            )));
        }
        Ok(Self { role, ..self })
    }
}
