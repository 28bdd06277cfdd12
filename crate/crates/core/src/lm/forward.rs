use super::layout::{InputToken, PackedInput};
use super::params::Model;
use crate::error::{Error, Result};
use crate::numerics::{cross_entropy, gemm, softmax_wide, Matrix, Real};
use crate::recurrent::{
    stack_backward_into, stack_sequence, stack_sequence_cached, RecurrentState, StackCache,
};

/// Activations kept by [`lm_forward_cached`] for [`lm_backward`].
#[derive(Clone, Debug)]
pub struct LmCache<T = f32> {
    pub hidden: Matrix<T>,
    pub stack: StackCache<T>,
}

/// Applies the audio head to hidden rows (one row per position).
pub fn head_logits<T: Real>(model: &Model<T>, hidden: &Matrix<T>) -> Matrix<T> {
    let head = &model.lm.audio_head;
    let mut out = Matrix::zeros(hidden.rows(), head.cols());
    gemm(
        hidden.as_slice(),
        head.as_slice(),
        hidden.rows(),
        head.rows(),
        head.cols(),
        out.as_mut_slice(),
    );
    out
}

fn check_packed<T: Real>(model: &Model<T>, packed: &PackedInput<T>) -> Result<()> {
    let d = model.config.block.d_model;
    if packed.embeddings.shape() != (packed.len(), d) {
        return Err(Error::shape(
            packed.embeddings.shape(),
            (packed.len(), d),
            "packed embeddings",
        ));
    }
    Ok(())
}

/// Runs the block stack over the packed embeddings and applies the audio head
/// at every position: `L × (speech_vocab + 1)` logits.
pub fn lm_forward<T: Real>(
    model: &Model<T>,
    packed: &PackedInput<T>,
    state: &mut RecurrentState<T>,
) -> Result<Matrix<T>> {
    check_packed(model, packed)?;
    let hidden = stack_sequence(&model.blocks, &packed.embeddings, state)?;
    Ok(head_logits(model, &hidden))
}

/// [`lm_forward`] recording activations for backward.
pub fn lm_forward_cached<T: Real>(
    model: &Model<T>,
    packed: &PackedInput<T>,
    state: &mut RecurrentState<T>,
) -> Result<(Matrix<T>, LmCache<T>)> {
    check_packed(model, packed)?;
    let (hidden, stack) = stack_sequence_cached(&model.blocks, &packed.embeddings, state)?;
    let logits = head_logits(model, &hidden);
    Ok((logits, LmCache { hidden, stack }))
}

fn check_logits<T: Real>(logits: &Matrix<T>, packed: &PackedInput<T>) -> Result<()> {
    if logits.rows() != packed.len() {
        return Err(Error::shape(logits.rows(), packed.len(), "logit rows vs packed length"));
    }
    Ok(())
}

/// Mean cross-entropy over the supervised positions.
pub fn lm_loss<T: Real>(logits: &Matrix<T>, packed: &PackedInput<T>) -> Result<(f64, usize)> {
    check_logits(logits, packed)?;
    cross_entropy(logits, &packed.targets, &packed.loss_mask)
}

/// Loss, count, and `∂loss/∂logits` (zero on unsupervised rows).
pub fn lm_loss_grad<T: Real>(
    logits: &Matrix<T>,
    packed: &PackedInput<T>,
) -> Result<(f64, usize, Matrix<T>)> {
    let (loss, count) = lm_loss(logits, packed)?;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let scale = 1.0 / count as f64;
    for t in 0..logits.rows() {
        if !packed.loss_mask[t] {
            continue;
        }
        let p = softmax_wide(logits.row(t), 1.0);
        let row = grad.row_mut(t);
        for (j, (g, pj)) in row.iter_mut().zip(p).enumerate() {
            let onehot = if j == packed.targets[t] { 1.0 } else { 0.0 };
            *g = T::of((pj - onehot) * scale);
        }
    }
    Ok((loss, count, grad))
}

/// Backpropagates `dlogits` into a fresh gradient set.
pub fn lm_backward<T: Real>(
    model: &Model<T>,
    packed: &PackedInput<T>,
    cache: &LmCache<T>,
    dlogits: &Matrix<T>,
) -> Result<Model<T>> {
    let mut grads = Model::zeros(model.config);
    lm_backward_into(model, packed, cache, dlogits, &mut grads)?;
    Ok(grads)
}

/// Backpropagates `dlogits`, accumulating into `grads`.
pub fn lm_backward_into<T: Real>(
    model: &Model<T>,
    packed: &PackedInput<T>,
    cache: &LmCache<T>,
    dlogits: &Matrix<T>,
    grads: &mut Model<T>,
) -> Result<()> {
    check_logits(dlogits, packed)?;
    if dlogits.cols() != model.config.logit_width() || cache.hidden.rows() != packed.len() {
        return Err(Error::shape(
            (dlogits.shape(), cache.hidden.rows()),
            (packed.len(), model.config.logit_width()),
            "lm_backward logits/cache",
        ));
    }
    if grads.config != model.config {
        return Err(Error::Usage("gradient buffer built for another model".into()));
    }
    let d_head = cache.hidden.matmul_tn(dlogits)?;
    grads.lm.audio_head.add_assign(&d_head)?;
    let dh = dlogits.matmul_nt(&model.lm.audio_head)?;
    let dx = stack_backward_into(&model.blocks, &cache.stack, &dh, &mut grads.blocks)?;

    for (t, &tok) in packed.tokens.iter().enumerate() {
        let dst = match tok {
            InputToken::Sos => grads.lm.sos_embedding.row_mut(0),
            InputToken::Text(id) => grads.lm.text_embedding.row_mut(id as usize),
            InputToken::Task => grads.lm.task_id_embedding.row_mut(0),
            InputToken::Speech(id) => grads.lm.speech_embedding.row_mut(id as usize),
        };
        for (g, &v) in dst.iter_mut().zip(dx.row(t)) {
            *g = T::of(g.wide() + v.wide());
        }
    }
    Ok(())
}
