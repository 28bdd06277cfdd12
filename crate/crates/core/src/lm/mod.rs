//! Speech-token language model around the block stack: embedding tables,
//! the `sos | text | task | prompt | target` layout, the audio head, and the
//! masked teacher-forced loss with its backward pass.

mod forward;
mod layout;
mod params;

pub use forward::{
    head_logits, lm_backward, lm_backward_into, lm_forward, lm_forward_cached, lm_loss,
    lm_loss_grad, LmCache,
};
pub use layout::{assemble, packed_len, InputToken, PackedInput, Segments, TrainingExample};
pub(crate) use layout::{embed, embed_row, layout_tokens};
pub use params::{LmConfig, LmParams, Model, EMBED_STD};
