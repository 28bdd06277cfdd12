//! Autoregressive speech-token decoding with constant-size recurrent state
//! and an incremental per-token hook.

mod generate;
mod sample;

pub use generate::{
    generate, prefill, GenerationResult, Generator, StopReason, TokenConsumer, TokenEvent,
};
pub use sample::{sample, GenerationConfig, Strategy};
