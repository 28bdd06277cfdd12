use crate::error::{Error, Result};
use crate::numerics::{gemm, gemm_tn_acc, rms_norm_backward, Matrix, Real};
use crate::recurrent::forward::{ChannelMixCache, TimeMixCache, NORM_EPS};
use crate::recurrent::kernels::{in_window, DECAY_RAW_RANGE, RATE_RAW_RANGE};
use crate::recurrent::{BlockConfig, BlockParams, LayerParams, StackCache};

/// `dy · wᵀ`
fn back_project<T: Real>(dy: &Matrix<T>, w: &Matrix<T>) -> Matrix<T> {
    let wt = w.transpose();
    let mut out = Matrix::zeros(dy.rows(), w.rows());
    gemm(dy.as_slice(), wt.as_slice(), dy.rows(), dy.cols(), w.rows(), out.as_mut_slice());
    out
}

/// `grad += xᵀ · dy`
fn accumulate_weight<T: Real>(grad: &mut Matrix<T>, x: &Matrix<T>, dy: &Matrix<T>) {
    gemm_tn_acc(
        x.as_slice(),
        dy.as_slice(),
        x.rows(),
        x.cols(),
        dy.cols(),
        grad.as_mut_slice(),
    );
}

fn add_wide<T: Real>(grad: &mut Matrix<T>, wide: &[f64]) {
    for (g, &w) in grad.as_mut_slice().iter_mut().zip(wide) {
        *g = T::of(g.wide() + w);
    }
}

/// Backward of token shift followed by RMS norm. Adds into `dx`, `dmu`, `dgain`.
#[allow(clippy::too_many_arguments)]
fn shift_norm_backward<T: Real>(
    ds: &Matrix<T>,
    n: &Matrix<T>,
    prev0: &[T],
    mu: &Matrix<T>,
    x: &Matrix<T>,
    inv: &[f64],
    gain: &Matrix<T>,
    dx: &mut Matrix<T>,
    dmu: &mut Matrix<T>,
    dgain: &mut Matrix<T>,
) {
    let (t_len, d) = n.shape();
    let mu = mu.as_slice();
    let mut dn = vec![0f64; t_len * d];
    let mut dmu_w = vec![0f64; d];
    for t in 0..t_len {
        let prev = if t == 0 { prev0 } else { n.row(t - 1) };
        let cur = n.row(t);
        let dst = ds.row(t);
        for j in 0..d {
            let g = dst[j].wide();
            let m = mu[j].wide();
            dmu_w[j] += g * (cur[j].wide() - prev[j].wide());
            dn[t * d + j] += g * m;
            if t > 0 {
                dn[(t - 1) * d + j] += g * (1.0 - m);
            }
        }
    }
    add_wide(dmu, &dmu_w);
    let dn: Vec<T> = dn.into_iter().map(T::of).collect();
    let mut dgain_w = vec![0f64; d];
    for t in 0..t_len {
        rms_norm_backward(
            x.row(t),
            gain.as_slice(),
            inv[t],
            &dn[t * d..(t + 1) * d],
            dx.row_mut(t),
            &mut dgain_w,
        );
    }
    add_wide(dgain, &dgain_w);
}

fn channel_mix_backward<T: Real>(
    p: &LayerParams<T>,
    c: &ChannelMixCache<T>,
    dout: &Matrix<T>,
    g: &mut LayerParams<T>,
) -> Matrix<T> {
    accumulate_weight(&mut g.w_down, &c.h, dout);
    let mut du = back_project(dout, &p.w_down);
    for (d, &u) in du.as_mut_slice().iter_mut().zip(c.u.as_slice()) {
        *d = T::of(d.wide() * 2.0 * u.max(T::zero()).wide());
    }
    accumulate_weight(&mut g.w_up, &c.s, &du);
    let ds = back_project(&du, &p.w_up);
    let mut dx = Matrix::zeros(c.x.rows(), c.x.cols());
    shift_norm_backward(
        &ds,
        &c.n,
        &c.prev0,
        &p.mu_channel,
        &c.x,
        &c.inv,
        &p.ffn_norm,
        &mut dx,
        &mut g.mu_channel,
        &mut g.ffn_norm,
    );
    dx
}

fn time_mix_backward<T: Real>(
    cfg: &BlockConfig,
    p: &LayerParams<T>,
    c: &TimeMixCache<T>,
    dout: &Matrix<T>,
    g: &mut LayerParams<T>,
) -> Matrix<T> {
    let (t_len, d) = c.x.shape();
    let heads = cfg.n_heads;
    let hd = cfg.head_dim();
    let hh = hd * hd;
    let state_len = heads * hh;

    accumulate_weight(&mut g.w_o, &c.o, dout);
    let d_o = back_project(dout, &p.w_o);

    // gate and per-head norm
    let mut dgate_raw = Matrix::zeros(t_len, d);
    let mut dyn_ = Matrix::<T>::zeros(t_len, d);
    for t in 0..t_len {
        for j in 0..d {
            let dov = d_o.get(t, j).wide();
            let gt = c.gate.get(t, j).wide();
            dgate_raw.set(t, j, T::of(dov * c.yn.get(t, j).wide() * gt * (1.0 - gt)));
            dyn_.set(t, j, T::of(dov * gt));
        }
    }
    let mut dy = Matrix::zeros(t_len, d);
    let mut dgain_w = vec![0f64; d];
    let gain = p.wkv_norm.as_slice();
    for t in 0..t_len {
        for h in 0..heads {
            let span = h * hd..(h + 1) * hd;
            rms_norm_backward(
                &c.y.row(t)[span.clone()],
                &gain[span.clone()],
                c.head_inv[t * heads + h],
                &dyn_.row(t)[span.clone()],
                &mut dy.row_mut(t)[span.clone()],
                &mut dgain_w[span],
            );
        }
    }
    add_wide(&mut g.wkv_norm, &dgain_w);

    // delta-rule recurrence, reverse time
    let mut dr = Matrix::zeros(t_len, d);
    let mut dk = Matrix::zeros(t_len, d);
    let mut dv = Matrix::zeros(t_len, d);
    let mut dw_raw = Matrix::zeros(t_len, d);
    let mut da_raw = Matrix::zeros(t_len, d);
    let mut ds_state = vec![0f64; hh];
    let mut q = vec![0f64; hd];
    let mut pk = vec![0f64; hd];
    let mut dkhat = vec![0f64; hd];
    let mut db = vec![0f64; hd];
    for h in 0..heads {
        ds_state.fill(0.0);
        let off = h * hd;
        for t in (0..t_len).rev() {
            let prev = &c.states[t * state_len + h * hh..t * state_len + (h + 1) * hh];
            let cur = &c.states[(t + 1) * state_len + h * hh..(t + 1) * state_len + (h + 1) * hh];
            let r = &c.r.row(t)[off..off + hd];
            let k = &c.k.row(t)[off..off + hd];
            let v = &c.v.row(t)[off..off + hd];
            let w = &c.w.row(t)[off..off + hd];
            let a = &c.a.row(t)[off..off + hd];
            let kh = &c.khat.row(t)[off..off + hd];
            let dyt = &dy.row(t)[off..off + hd];

            // y = S_t r
            for j in 0..hd {
                let mut acc = 0f64;
                for i in 0..hd {
                    acc += cur[i * hd + j].wide() * dyt[i].wide();
                }
                dr.set(t, off + j, T::of(acc));
            }
            for i in 0..hd {
                let dyi = dyt[i].wide();
                for j in 0..hd {
                    ds_state[i * hd + j] += dyi * r[j].wide();
                }
            }

            // S_t = S_{t-1}(diag(w) − κ̂ bᵀ) + v kᵀ with b = a ⊙ κ̂
            for i in 0..hd {
                let mut acc_v = 0f64;
                let mut acc_q = 0f64;
                let mut acc_p = 0f64;
                for j in 0..hd {
                    let dsij = ds_state[i * hd + j];
                    acc_v += dsij * k[j].wide();
                    acc_q += dsij * a[j].wide() * kh[j].wide();
                    acc_p += prev[i * hd + j].wide() * kh[j].wide();
                }
                dv.set(t, off + i, T::of(acc_v));
                q[i] = acc_q;
                pk[i] = acc_p;
            }
            for j in 0..hd {
                let mut acc_k = 0f64;
                let mut acc_w = 0f64;
                let mut acc_kh = 0f64;
                let mut acc_b = 0f64;
                for i in 0..hd {
                    let dsij = ds_state[i * hd + j];
                    let sp = prev[i * hd + j].wide();
                    acc_k += dsij * v[i].wide();
                    acc_w += sp * dsij;
                    acc_kh += sp * q[i];
                    acc_b += dsij * pk[i];
                }
                let wj = w[j].wide();
                let wr = c.w_raw.get(t, off + j).wide();
                let dwr = if in_window(wr, DECAY_RAW_RANGE) {
                    acc_w * (-wj * wr.exp())
                } else {
                    0.0
                };
                dw_raw.set(t, off + j, T::of(dwr));
                db[j] = -acc_b;
                dkhat[j] = -acc_kh + db[j] * a[j].wide();
                let aj = a[j].wide();
                let dar = if in_window(c.a_raw.get(t, off + j).wide(), RATE_RAW_RANGE) {
                    db[j] * kh[j].wide() * aj * (1.0 - aj)
                } else {
                    0.0
                };
                da_raw.set(t, off + j, T::of(dar));
                dk.set(t, off + j, T::of(acc_k));
            }
            // κ̂ = k / (‖k‖ + ε)
            let norm = c.knorm[t * heads + h];
            let cden = norm + crate::recurrent::KEY_EPS;
            let proj: f64 = if norm > 0.0 {
                dkhat.iter().zip(k).map(|(g, kv)| g * kv.wide()).sum::<f64>() / (norm * cden * cden)
            } else {
                0.0
            };
            for j in 0..hd {
                let kj = k[j].wide();
                let cur_dk = dk.get(t, off + j).wide();
                dk.set(t, off + j, T::of(cur_dk + dkhat[j] / cden - kj * proj));
            }
            // dS_{t-1} = dS_t (diag(w) − κ̂ bᵀ)ᵀ
            for i in 0..hd {
                for l in 0..hd {
                    let idx = i * hd + l;
                    ds_state[idx] = ds_state[idx] * w[l].wide() - q[i] * kh[l].wide();
                }
            }
        }
    }

    accumulate_weight(&mut g.w_r, &c.s, &dr);
    accumulate_weight(&mut g.w_k, &c.s, &dk);
    accumulate_weight(&mut g.w_v, &c.s, &dv);
    accumulate_weight(&mut g.w_w, &c.s, &dw_raw);
    accumulate_weight(&mut g.w_a, &c.s, &da_raw);
    accumulate_weight(&mut g.w_g, &c.s, &dgate_raw);
    let mut bias_w = vec![0f64; d];
    let mut bias_a = vec![0f64; d];
    for t in 0..t_len {
        for j in 0..d {
            bias_w[j] += dw_raw.get(t, j).wide();
            bias_a[j] += da_raw.get(t, j).wide();
        }
    }
    add_wide(&mut g.w_bias, &bias_w);
    add_wide(&mut g.a_bias, &bias_a);

    let parts = [
        back_project(&dr, &p.w_r),
        back_project(&dk, &p.w_k),
        back_project(&dv, &p.w_v),
        back_project(&dw_raw, &p.w_w),
        back_project(&da_raw, &p.w_a),
        back_project(&dgate_raw, &p.w_g),
    ];
    let mut ds = Matrix::zeros(t_len, d);
    for (i, o) in ds.as_mut_slice().iter_mut().enumerate() {
        *o = T::of(parts.iter().map(|m| m.as_slice()[i].wide()).sum());
    }
    let mut dx = Matrix::zeros(t_len, d);
    shift_norm_backward(
        &ds,
        &c.n,
        &c.prev0,
        &p.mu_time,
        &c.x,
        &c.inv,
        &p.att_norm,
        &mut dx,
        &mut g.mu_time,
        &mut g.att_norm,
    );
    debug_assert!(NORM_EPS > 0.0);
    dx
}

fn add_into<T: Real>(acc: &mut Matrix<T>, other: &Matrix<T>) {
    for (a, &b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a = *a + b;
    }
}

/// Gradients of a scalar objective through a cached [`stack_sequence_cached`]
/// run, given `dh = ∂L/∂H`. Returns `∂L/∂X` and the parameter gradients.
///
/// The incoming state is treated as a constant.
///
/// [`stack_sequence_cached`]: crate::recurrent::stack_sequence_cached
pub fn stack_backward<T: Real>(
    params: &BlockParams<T>,
    cache: &StackCache<T>,
    dh: &Matrix<T>,
) -> Result<(Matrix<T>, BlockParams<T>)> {
    let mut grads = BlockParams::zeros(params.config);
    let dx = stack_backward_into(params, cache, dh, &mut grads)?;
    Ok((dx, grads))
}

/// Like [`stack_backward`], accumulating parameter gradients into `grads`.
pub fn stack_backward_into<T: Real>(
    params: &BlockParams<T>,
    cache: &StackCache<T>,
    dh: &Matrix<T>,
    grads: &mut BlockParams<T>,
) -> Result<Matrix<T>> {
    if !cache.recorded {
        return Err(Error::Usage(
            "backward requires a forward pass run with caching enabled".into(),
        ));
    }
    if cache.layers.len() != params.layers.len() || grads.config != params.config {
        return Err(Error::Usage("cache was recorded with a different stack".into()));
    }
    if dh.shape() != (cache.rows, params.config.d_model) {
        return Err(Error::shape(
            dh.shape(),
            (cache.rows, params.config.d_model),
            "stack_backward output gradient",
        ));
    }
    let mut dx = dh.clone();
    for ((p, c), g) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        let d_mid_from_ffn = channel_mix_backward(p, &c.channel, &dx, g);
        add_into(&mut dx, &d_mid_from_ffn);
        let d_in_from_att = time_mix_backward(&params.config, p, &c.time, &dx, g);
        add_into(&mut dx, &d_in_from_att);
    }
    Ok(dx)
}
