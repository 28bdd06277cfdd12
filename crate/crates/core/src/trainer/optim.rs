use crate::error::{Error, Result};
use crate::lm::{LmConfig, Model};

/// Optimizer and loop settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Maximum global L2 norm of the gradient; larger gradients are rescaled.
    pub grad_clip: f64,
    pub steps: usize,
    /// Examples averaged into each optimizer step.
    pub accumulation: usize,
    pub seed: u64,
    pub prompt_drop: f64,
    /// Linear learning-rate warmup length; 0 disables it.
    pub warmup_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            grad_clip: 1.0,
            steps: 1000,
            accumulation: 1,
            seed: 0,
            prompt_drop: crate::dataprep::DEFAULT_PROMPT_DROP,
            warmup_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid training config: {what}")));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.eps > 0.0) || !(self.grad_clip > 0.0) {
            return bad("eps and grad_clip must be positive");
        }
        if self.accumulation == 0 {
            return bad("accumulation must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.prompt_drop) {
            return bad("prompt_drop must lie in [0, 1]");
        }
        Ok(())
    }

    /// Learning rate at 1-based step `t`.
    pub fn lr_at(&self, t: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * (t as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// First and second moment estimates, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Model,
    pub v: Model,
}

impl AdamState {
    pub fn new(config: LmConfig) -> Self {
        Self {
            m: Model::zeros(config),
            v: Model::zeros(config),
        }
    }
}

/// Global L2 norm over all tensors, checking finiteness per tensor.
pub fn global_norm(grads: &Model) -> Result<f64> {
    let mut total = 0f64;
    for (name, g) in grads.tensors() {
        if !g.is_finite() {
            return Err(Error::Training(format!("non-finite gradient in {name}")));
        }
        total += g.sum_squares();
    }
    Ok(total.sqrt())
}

/// Rescales `grads` so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Model, max_norm: f64) -> Result<f64> {
    let norm = global_norm(grads)?;
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, g) in grads.tensors_mut() {
            for v in g.as_mut_slice() {
                *v = (*v as f64 * scale) as f32;
            }
        }
    }
    Ok(norm)
}

/// One bias-corrected adaptive-moment update at 1-based step `t`, after
/// global-norm clipping of `grads` (in place). Mix coefficients are clamped
/// back into `[0, 1]` afterward. Returns the pre-clip gradient norm.
pub fn adam_step(
    params: &mut Model,
    grads: &mut Model,
    state: &mut AdamState,
    config: &TrainConfig,
    t: u64,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Parameter("adam step index starts at 1".into()));
    }
    if params.config != grads.config || params.config != state.m.config {
        return Err(Error::shape(
            (params.config, grads.config),
            state.m.config,
            "adam_step model configurations",
        ));
    }
    let norm = clip_global_norm(grads, config.grad_clip)?;
    let lr = config.lr_at(t);
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
        let slices = p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice());
        for (((p, &g), m), v) in slices {
            let g = g as f64;
            let m_new = b1 * *m as f64 + (1.0 - b1) * g;
            let v_new = b2 * *v as f64 + (1.0 - b2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + config.eps);
            *p = (*p as f64 - update) as f32;
        }
    }
    params.clamp_mix();
    Ok(norm)
}
