use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

/// Temperature-scaled softmax with max subtraction.
pub fn softmax<T: Real>(x: &[T], temperature: f64) -> Result<Vec<T>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    Ok(softmax_wide(x, temperature).into_iter().map(T::of).collect())
}

pub(crate) fn softmax_wide<T: Real>(x: &[T], temperature: f64) -> Vec<f64> {
    let max = x
        .iter()
        .map(|v| v.wide() / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x
        .iter()
        .map(|v| (v.wide() / temperature - max).exp())
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// `log Σ exp(x)` in 64 bits.
pub(crate) fn log_sum_exp<T: Real>(x: &[T]) -> f64 {
    let max = x.iter().map(|v| v.wide()).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().map(|v| (v.wide() - max).exp()).sum();
    max + s.ln()
}

/// Mean masked cross-entropy of `logits` rows against `targets`.
///
/// Returns `(loss, count)` where `count` is the number of rows with `mask` set.
pub fn cross_entropy<T: Real>(
    logits: &Matrix<T>,
    targets: &[usize],
    mask: &[bool],
) -> Result<(f64, usize)> {
    let (t, v) = logits.shape();
    if targets.len() != t || mask.len() != t {
        return Err(Error::shape(
            (t, v),
            (targets.len(), mask.len()),
            "cross_entropy targets/mask length",
        ));
    }
    let mut total = 0f64;
    let mut count = 0usize;
    for (i, (&target, &on)) in targets.iter().zip(mask).enumerate() {
        if !on {
            continue;
        }
        if target >= v {
            return Err(Error::Data(format!(
                "target id {target} at position {i} outside vocabulary of {v}"
            )));
        }
        let row = logits.row(i);
        total += log_sum_exp(row) - row[target].wide();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyLoss);
    }
    Ok((total / count as f64, count))
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle { index: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `xᵢ·gainᵢ / sqrt(mean(x²) + eps)`.
pub fn rms_norm<T: Real>(x: &[T], gain: &[T], eps: f64) -> Result<Vec<T>> {
    if x.len() != gain.len() {
        return Err(Error::shape(x.len(), gain.len(), "rms_norm gain length"));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("rms_norm eps must be positive, got {eps}")));
    }
    let mut out = vec![T::zero(); x.len()];
    rms_norm_into(x, gain, eps, &mut out);
    Ok(out)
}

/// Writes the normalized row into `out` and returns the inverse RMS.
#[inline]
pub(crate) fn rms_norm_into<T: Real>(x: &[T], gain: &[T], eps: f64, out: &mut [T]) -> f64 {
    let ms = x.iter().map(|v| v.wide() * v.wide()).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + eps).sqrt();
    for ((o, &xi), &g) in out.iter_mut().zip(x).zip(gain) {
        *o = T::of(xi.wide() * inv * g.wide());
    }
    inv
}

/// Backward of [`rms_norm_into`]: adds into `dx` and `dgain`.
#[inline]
pub(crate) fn rms_norm_backward<T: Real>(
    x: &[T],
    gain: &[T],
    inv: f64,
    dy: &[T],
    dx: &mut [T],
    dgain: &mut [f64],
) {
    let n = x.len() as f64;
    let mut proj = 0f64;
    for ((&d, &g), &xi) in dy.iter().zip(gain).zip(x) {
        proj += d.wide() * g.wide() * xi.wide();
    }
    let coef = proj * inv * inv * inv / n;
    for i in 0..x.len() {
        let xi = x[i].wide();
        let d = dy[i].wide();
        dgain[i] += d * xi * inv;
        dx[i] = T::of(dx[i].wide() + d * gain[i].wide() * inv - xi * coef);
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
