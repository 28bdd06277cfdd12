//! Recurrent block stack: token shift, time mixing over a matrix-valued
//! delta-rule state, channel mixing, and hand-derived backward passes.
//!
//! Per layer and position, with `x` the residual stream:
//!
//! ```text
//! n = rms(x) · g₁          s = μₜ⊙n + (1−μₜ)⊙n_prev
//! r,k,v,g = s·W            w = exp(−exp(s·W_w + b_w))    a = σ(s·W_a + b_a)
//! S ← S(diag(w) − κ̂(a⊙κ̂)ᵀ) + v kᵀ     y = S r            (per head, κ̂ = k/(‖k‖+ε))
//! x += (σ(g) ⊙ headrms(y)) · W_o
//! m = rms(x) · g₂          s' = μ_c⊙m + (1−μ_c)⊙m_prev
//! x += relu(s'·W_up)² · W_down
//! ```

mod backward;
mod forward;
mod kernels;
mod params;
mod state;

pub use backward::{stack_backward, stack_backward_into};
pub use forward::{
    channel_mixing_forward, stack_sequence, stack_sequence_cached, stack_step,
    time_mixing_forward, StackCache, NORM_EPS,
};
pub use kernels::{
    decay_from_raw, rate_from_raw, token_shift, wkv_step, DECAY_RAW_RANGE, KEY_EPS, RATE_RAW_RANGE,
};
pub use params::{BlockConfig, BlockParams, LayerParams, FFN_EXPANSION, INITIAL_DECAY, INIT_STD};
pub use state::{LayerState, RecurrentState};
