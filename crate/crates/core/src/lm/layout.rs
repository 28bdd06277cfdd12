use std::ops::Range;

use super::params::{LmConfig, LmParams};
use crate::codec::{Role, TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

/// One supervised text/speech pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub text: TokenSequence,
    pub prompt_speech: TokenSequence,
    pub target_speech: TokenSequence,
}

impl TrainingExample {
    pub fn new(
        text: TokenSequence,
        prompt_speech: TokenSequence,
        target_speech: TokenSequence,
    ) -> Result<Self> {
        let roles = (text.role(), prompt_speech.role(), target_speech.role());
        if roles != (Role::Text, Role::PromptSpeech, Role::TargetSpeech) {
            return Err(Error::Usage(format!("example sequences have roles {roles:?}")));
        }
        if target_speech.is_empty() {
            return Err(Error::Data("training example has an empty target".into()));
        }
        Ok(Self {
            text,
            prompt_speech,
            target_speech,
        })
    }

    pub fn packed_len(&self) -> usize {
        packed_len(self.text.len(), self.prompt_speech.len(), self.target_speech.len())
    }
}

/// `L = sos + text + task + prompt + target`.
pub fn packed_len(text: usize, prompt: usize, target: usize) -> usize {
    2 + text + prompt + target
}

/// Where each input row's embedding came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputToken {
    Sos,
    Text(TokenId),
    Task,
    Speech(TokenId),
}

/// Contiguous spans, in this order, partitioning `[0, L)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub sos: Range<usize>,
    pub text: Range<usize>,
    pub task: Range<usize>,
    pub prompt_audio: Range<usize>,
    pub target_audio: Range<usize>,
}

impl Segments {
    fn new(text: usize, prompt: usize, target: usize) -> Self {
        let text_end = 1 + text;
        let prompt_end = text_end + 1 + prompt;
        Self {
            sos: 0..1,
            text: 1..text_end,
            task: text_end..text_end + 1,
            prompt_audio: text_end + 1..prompt_end,
            target_audio: prompt_end..prompt_end + target,
        }
    }

    pub fn spans(&self) -> [Range<usize>; 5] {
        [
            self.sos.clone(),
            self.text.clone(),
            self.task.clone(),
            self.prompt_audio.clone(),
            self.target_audio.clone(),
        ]
    }

    pub fn sizes(&self) -> [usize; 5] {
        self.spans().map(|r| r.len())
    }

    pub fn len(&self) -> usize {
        self.target_audio.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assembled model input for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedInput<T = f32> {
    pub embeddings: Matrix<T>,
    pub segments: Segments,
    pub tokens: Vec<InputToken>,
    /// True exactly where the next emitted token is a target codeword or EOS.
    pub loss_mask: Vec<bool>,
    /// Valid where the mask is set; zero elsewhere.
    pub targets: Vec<usize>,
}

impl<T> PackedInput<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    /// Recovers `(text, prompt, target)` ids from the segment spans.
    pub fn decode_spans(&self) -> (Vec<TokenId>, Vec<TokenId>, Vec<TokenId>) {
        let ids = |r: &Range<usize>| {
            self.tokens[r.clone()]
                .iter()
                .filter_map(|t| match *t {
                    InputToken::Text(id) | InputToken::Speech(id) => Some(id),
                    _ => None,
                })
                .collect()
        };
        (
            ids(&self.segments.text),
            ids(&self.segments.prompt_audio),
            ids(&self.segments.target_audio),
        )
    }
}

fn check_ids(ids: &[TokenId], vocab: usize, what: &str) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= vocab) {
        Some(bad) => Err(Error::Data(format!("{what} id {bad} outside vocabulary of {vocab}"))),
        None => Ok(()),
    }
}

/// Input tokens for `sos | text | task | prompt | target`.
pub(crate) fn layout_tokens(
    cfg: &LmConfig,
    text: &[TokenId],
    prompt: &[TokenId],
    target: &[TokenId],
) -> Result<Vec<InputToken>> {
    check_ids(text, cfg.text_vocab(), "text")?;
    check_ids(prompt, cfg.speech_vocab, "prompt speech")?;
    check_ids(target, cfg.speech_vocab, "target speech")?;
    let mut tokens = Vec::with_capacity(packed_len(text.len(), prompt.len(), target.len()));
    tokens.push(InputToken::Sos);
    tokens.extend(text.iter().map(|&id| InputToken::Text(id)));
    tokens.push(InputToken::Task);
    tokens.extend(prompt.iter().chain(target).map(|&id| InputToken::Speech(id)));
    Ok(tokens)
}

pub(crate) fn embed_row<'a, T: Real>(lm: &'a LmParams<T>, token: InputToken) -> &'a [T] {
    match token {
        InputToken::Sos => lm.sos_embedding.row(0),
        InputToken::Text(id) => lm.text_embedding.row(id as usize),
        InputToken::Task => lm.task_id_embedding.row(0),
        InputToken::Speech(id) => lm.speech_embedding.row(id as usize),
    }
}

pub(crate) fn embed<T: Real>(lm: &LmParams<T>, tokens: &[InputToken]) -> Matrix<T> {
    let d = lm.sos_embedding.cols();
    let mut out = Matrix::zeros(tokens.len(), d);
    for (t, &tok) in tokens.iter().enumerate() {
        out.row_mut(t).copy_from_slice(embed_row(lm, tok));
    }
    out
}

/// Packs an example as `sos | text | task | prompt | target` and marks the
/// supervised positions.
///
/// The last prompt position (or the task position when there is no prompt)
/// predicts the first target codeword; each target position predicts the
/// next one, and the final target position predicts EOS.
pub fn assemble<T: Real>(
    cfg: &LmConfig,
    params: &LmParams<T>,
    example: &TrainingExample,
) -> Result<PackedInput<T>> {
    let (text, prompt, target) = (
        example.text.ids(),
        example.prompt_speech.ids(),
        example.target_speech.ids(),
    );
    let tokens = layout_tokens(cfg, text, prompt, target)?;
    let segments = Segments::new(text.len(), prompt.len(), target.len());
    let l = tokens.len();
    let mut loss_mask = vec![false; l];
    let mut targets = vec![0usize; l];
    let first = segments.target_audio.start - 1;
    for (i, &id) in target.iter().chain(std::iter::once(&cfg.eos())).enumerate() {
        loss_mask[first + i] = true;
        targets[first + i] = id as usize;
    }
    Ok(PackedInput {
        embeddings: embed(params, &tokens),
        segments,
        tokens,
        loss_mask,
        targets,
    })
}
