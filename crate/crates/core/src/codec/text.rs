use std::ops::Range;

use super::{TokenId, TokenSequence};
use crate::error::{Error, Result};

/// Ids below this are specials; byte `b` encodes as `N_SPECIALS + b`.
pub const N_SPECIALS: TokenId = 16;
/// Text vocabulary size: specials followed by the 256 byte values.
pub const TEXT_VOCAB: TokenId = N_SPECIALS + 256;

const SOS_TEXT: TokenId = 0;
const TASK_ID: TokenId = 1;
const END_OF_PROMPT: TokenId = 2;
const RESERVED: Range<TokenId> = 3..N_SPECIALS;

/// Reserved ids of both vocabularies.
///
/// `sos_text`, `task_id`, `end_of_prompt` and the control range live in the
/// text vocabulary; `eos_speech` is one past the last codeword and exists
/// only in the speech logit space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecialTokens {
    pub sos_text: TokenId,
    pub task_id: TokenId,
    /// Surface form `<|endofprompt|>`; marks the text as an instruction.
    pub end_of_prompt: TokenId,
    pub eos_speech: TokenId,
    /// Held for laughter, breath, dialect and similar controls.
    pub reserved_control: Range<TokenId>,
}

impl SpecialTokens {
    pub fn new(speech_vocab: usize) -> Self {
        Self {
            sos_text: SOS_TEXT,
            task_id: TASK_ID,
            end_of_prompt: END_OF_PROMPT,
            eos_speech: speech_vocab as TokenId,
            reserved_control: RESERVED,
        }
    }

    pub const END_OF_PROMPT_SURFACE: &'static str = "<|endofprompt|>";
}

/// Byte-level encoding; an instruction gets `end_of_prompt` appended.
pub fn text_encode(s: &str, instruction: bool) -> TokenSequence {
    let mut ids: Vec<TokenId> = s.bytes().map(|b| N_SPECIALS + b as TokenId).collect();
    if instruction {
        ids.push(END_OF_PROMPT);
    }
    TokenSequence::text(ids).expect("byte ids are always in the text vocabulary")
}

/// Inverse of [`text_encode`]: returns the string and the instruction flag.
pub fn text_decode(seq: &TokenSequence) -> Result<(String, bool)> {
    let mut ids = seq.ids();
    let instruction = ids.last() == Some(&END_OF_PROMPT);
    if instruction {
        ids = &ids[..ids.len() - 1];
    }
    let mut bytes = Vec::with_capacity(ids.len());
    for &id in ids {
        if id < N_SPECIALS {
            return Err(Error::Data(format!("special id {id} inside text body")));
        }
        bytes.push((id - N_SPECIALS) as u8);
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))?;
    Ok((text, instruction))
}
