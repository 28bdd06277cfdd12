use std::time::{Duration, Instant};

use super::sample::{sample, GenerationConfig};
use crate::codec::{Role, TokenSequence};
use crate::error::{Error, Result};
use crate::lm::{embed, embed_row, head_logits, layout_tokens, InputToken, Model};
use crate::numerics::{Matrix, SeededRng};
use crate::recurrent::{stack_sequence, stack_step, RecurrentState};

/// Why generation ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Eos,
    MaxTokens,
}

/// Output of [`generate`]. Never contains the end-of-speech id.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationResult {
    pub speech_ids: Vec<u32>,
    pub stop_reason: StopReason,
    /// Wall time from the start of each decoding step to its token choice.
    pub per_token_latency: Vec<Duration>,
    pub state_bytes: usize,
}

/// What the incremental consumer sees for each emitted id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenEvent {
    pub index: usize,
    pub id: u32,
    pub state_bytes: usize,
}

/// A live decoding stream: recurrent state plus the hidden vector whose
/// logits pick the next token.
#[derive(Clone, Debug)]
pub struct Generator<'m> {
    model: &'m Model,
    state: RecurrentState,
    hidden: Vec<f32>,
}

impl<'m> Generator<'m> {
    /// Runs the prefix `sos | text | task | prompt` through the stack.
    pub fn prefill(model: &'m Model, text: &TokenSequence, prompt: &TokenSequence) -> Result<Self> {
        if text.role() != Role::Text || prompt.role() == Role::Text {
            return Err(Error::Usage("prefill takes a text and a speech sequence".into()));
        }
        let tokens = layout_tokens(&model.config, text.ids(), prompt.ids(), &[])?;
        let x = embed(&model.lm, &tokens);
        let mut state = RecurrentState::fresh(model.config.block);
        let h = stack_sequence(&model.blocks, &x, &mut state)?;
        let hidden = h.row(h.rows() - 1).to_vec();
        Ok(Self {
            model,
            state,
            hidden,
        })
    }

    pub fn state(&self) -> &RecurrentState {
        &self.state
    }

    pub fn hidden(&self) -> &[f32] {
        &self.hidden
    }

    /// Logits (`speech_vocab + 1`) for the next token.
    pub fn logits(&self) -> Vec<f32> {
        head_logits(self.model, &Matrix::row_vector(self.hidden.clone())).into_vec()
    }

    /// Advances the stack by the embedding of an emitted codeword.
    pub fn feed(&mut self, id: u32) -> Result<()> {
        if id as usize >= self.model.config.speech_vocab {
            return Err(Error::Data(format!("cannot feed non-codeword id {id}")));
        }
        let x = embed_row(&self.model.lm, InputToken::Speech(id));
        self.hidden = stack_step(&self.model.blocks, x, &mut self.state)?;
        Ok(())
    }
}

/// `(state, last hidden)` after the prompt prefix.
pub fn prefill(
    model: &Model,
    text: &TokenSequence,
    prompt: &TokenSequence,
) -> Result<(RecurrentState, Vec<f32>)> {
    let g = Generator::prefill(model, text, prompt)?;
    Ok((g.state, g.hidden))
}

/// Consumer invoked once per emitted id, in order; an `Err` aborts decoding.
pub type TokenConsumer<'a> = &'a mut dyn FnMut(&TokenEvent) -> std::result::Result<(), String>;

/// Zero-shot decoding loop. The prefill hidden feeds the head for the first
/// token; every later step feeds back the previous id's embedding. Stops on
/// end-of-speech or after `max_tokens` ids.
pub fn generate(
    model: &Model,
    text: &TokenSequence,
    prompt: &TokenSequence,
    config: &GenerationConfig,
    mut on_token: Option<TokenConsumer<'_>>,
) -> Result<GenerationResult> {
    config.validate()?;
    let eos = model.config.eos();
    let mut rng = SeededRng::new(config.seed);
    let mut gen = Generator::prefill(model, text, prompt)?;
    let state_bytes = gen.state.byte_size();
    let mut result = GenerationResult {
        speech_ids: Vec::new(),
        stop_reason: StopReason::MaxTokens,
        per_token_latency: Vec::new(),
        state_bytes,
    };
    for index in 0..config.max_tokens {
        let started = Instant::now();
        if index > 0 {
            gen.feed(*result.speech_ids.last().expect("previous id exists"))?;
        }
        let id = sample(&gen.logits(), config, index, &mut rng)?;
        result.per_token_latency.push(started.elapsed());
        debug_assert_eq!(gen.state.byte_size(), state_bytes);
        if id == eos {
            result.stop_reason = StopReason::Eos;
            return Ok(result);
        }
        result.speech_ids.push(id);
        if let Some(consumer) = on_token.as_mut() {
            let event = TokenEvent {
                index,
                id,
                state_bytes: gen.state.byte_size(),
            };
            if let Err(reason) = consumer(&event) {
                return Err(Error::ConsumerAborted {
                    reason,
                    partial: Box::new(result),
                });
            }
        }
    }
    Ok(result)
}
