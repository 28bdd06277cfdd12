use crate::error::{Error, Result};
use crate::numerics::{gemm, rms_norm_into, sigmoid, Matrix, Real};
use crate::recurrent::kernels::{
    decay_from_raw, normalize_key, rate_from_raw, shift_into, wkv_head,
};
use crate::recurrent::{BlockConfig, BlockParams, LayerParams, LayerState, RecurrentState};

/// Epsilon of every RMS normalization in the stack.
pub const NORM_EPS: f64 = 1e-5;

/// Activations of one time-mixing sublayer over a sequence.
#[derive(Clone, Debug, Default)]
pub(crate) struct TimeMixCache<T> {
    pub x: Matrix<T>,
    pub inv: Vec<f64>,
    pub n: Matrix<T>,
    pub prev0: Vec<T>,
    pub s: Matrix<T>,
    pub r: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    pub w_raw: Matrix<T>,
    pub w: Matrix<T>,
    pub a_raw: Matrix<T>,
    pub a: Matrix<T>,
    pub gate: Matrix<T>,
    pub khat: Matrix<T>,
    /// `‖k‖` per position and head.
    pub knorm: Vec<f64>,
    /// wkv state before each position, plus the final state: `(T + 1) × H × N²`.
    pub states: Vec<T>,
    pub y: Matrix<T>,
    /// Inverse RMS of each head's wkv output, per position and head.
    pub head_inv: Vec<f64>,
    pub yn: Matrix<T>,
    pub o: Matrix<T>,
}

/// Activations of one channel-mixing sublayer over a sequence.
#[derive(Clone, Debug, Default)]
pub(crate) struct ChannelMixCache<T> {
    pub x: Matrix<T>,
    pub inv: Vec<f64>,
    pub n: Matrix<T>,
    pub prev0: Vec<T>,
    pub s: Matrix<T>,
    pub u: Matrix<T>,
    pub h: Matrix<T>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct LayerCache<T> {
    pub time: TimeMixCache<T>,
    pub channel: ChannelMixCache<T>,
}

/// Activations recorded by [`stack_sequence_cached`] for [`stack_backward`].
///
/// [`stack_backward`]: crate::recurrent::stack_backward
#[derive(Clone, Debug)]
pub struct StackCache<T = f32> {
    pub(crate) recorded: bool,
    pub(crate) rows: usize,
    pub(crate) layers: Vec<LayerCache<T>>,
}

impl<T> Default for StackCache<T> {
    fn default() -> Self {
        Self {
            recorded: false,
            rows: 0,
            layers: Vec::new(),
        }
    }
}

impl<T> StackCache<T> {
    pub fn is_recorded(&self) -> bool {
        self.recorded
    }
}

fn project<T: Real>(s: &Matrix<T>, w: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(s.rows(), w.cols());
    gemm(s.as_slice(), w.as_slice(), s.rows(), s.cols(), w.cols(), out.as_mut_slice());
    out
}

fn norm_rows<T: Real>(x: &Matrix<T>, gain: &Matrix<T>) -> (Matrix<T>, Vec<f64>) {
    let mut n = Matrix::zeros(x.rows(), x.cols());
    let inv = (0..x.rows())
        .map(|t| rms_norm_into(x.row(t), gain.as_slice(), NORM_EPS, n.row_mut(t)))
        .collect();
    (n, inv)
}

/// Token-shifts every row against its predecessor, leaving the last row in `prev`.
fn shift_rows<T: Real>(n: &Matrix<T>, mu: &Matrix<T>, prev: &mut Vec<T>) -> Matrix<T> {
    let mut s = Matrix::zeros(n.rows(), n.cols());
    for t in 0..n.rows() {
        shift_into(n.row(t), prev, mu.as_slice(), s.row_mut(t));
        prev.copy_from_slice(n.row(t));
    }
    s
}

pub(crate) fn time_mix<T: Real>(
    cfg: &BlockConfig,
    p: &LayerParams<T>,
    x: &Matrix<T>,
    st: &mut LayerState<T>,
    record: bool,
) -> (Matrix<T>, Option<TimeMixCache<T>>) {
    let t_len = x.rows();
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let hd = cfg.head_dim();

    let (n, inv) = norm_rows(x, &p.att_norm);
    let prev0 = st.shift_time.clone();
    let s = shift_rows(&n, &p.mu_time, &mut st.shift_time);

    let r = project(&s, &p.w_r);
    let k = project(&s, &p.w_k);
    let v = project(&s, &p.w_v);
    let mut w_raw = project(&s, &p.w_w);
    let mut a = project(&s, &p.w_a);
    let mut gate = project(&s, &p.w_g);
    let mut w = Matrix::zeros(t_len, d);
    let mut a_raw = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        let (wb, ab) = (p.w_bias.as_slice(), p.a_bias.as_slice());
        for j in 0..d {
            let wr = T::of(w_raw.get(t, j).wide() + wb[j].wide());
            w_raw.set(t, j, wr);
            w.set(t, j, T::of(decay_from_raw(wr.wide())));
            let ar = T::of(a.get(t, j).wide() + ab[j].wide());
            a_raw.set(t, j, ar);
            a.set(t, j, T::of(rate_from_raw(ar.wide())));
            gate.set(t, j, T::of(sigmoid(gate.get(t, j).wide())));
        }
    }

    let mut khat = Matrix::zeros(t_len, d);
    let mut knorm = vec![0f64; t_len * heads];
    for t in 0..t_len {
        for h in 0..heads {
            let span = h * hd..(h + 1) * hd;
            knorm[t * heads + h] = normalize_key(&k.row(t)[span.clone()], &mut khat.row_mut(t)[span]);
        }
    }

    let state_len = heads * hd * hd;
    let mut states = if record {
        Vec::with_capacity((t_len + 1) * state_len)
    } else {
        Vec::new()
    };
    let mut y = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        if record {
            states.extend_from_slice(&st.wkv);
        }
        let yrow = y.row_mut(t);
        for h in 0..heads {
            let span = h * hd..(h + 1) * hd;
            wkv_head(
                &mut st.wkv[h * hd * hd..(h + 1) * hd * hd],
                hd,
                &w.row(t)[span.clone()],
                &khat.row(t)[span.clone()],
                &a.row(t)[span.clone()],
                &k.row(t)[span.clone()],
                &v.row(t)[span.clone()],
                &r.row(t)[span.clone()],
                &mut yrow[span],
            );
        }
    }
    if record {
        states.extend_from_slice(&st.wkv);
    }

    let mut yn = Matrix::zeros(t_len, d);
    let mut head_inv = vec![0f64; t_len * heads];
    let mut o = Matrix::zeros(t_len, d);
    let gain = p.wkv_norm.as_slice();
    for t in 0..t_len {
        for h in 0..heads {
            let span = h * hd..(h + 1) * hd;
            head_inv[t * heads + h] = rms_norm_into(
                &y.row(t)[span.clone()],
                &gain[span.clone()],
                NORM_EPS,
                &mut yn.row_mut(t)[span],
            );
        }
        for j in 0..d {
            o.set(t, j, T::of(gate.get(t, j).wide() * yn.get(t, j).wide()));
        }
    }
    let out = project(&o, &p.w_o);

    let cache = record.then(|| TimeMixCache {
        x: x.clone(),
        inv,
        n,
        prev0,
        s,
        r,
        k,
        v,
        w_raw,
        w,
        a_raw,
        a,
        gate,
        khat,
        knorm,
        states,
        y,
        head_inv,
        yn,
        o,
    });
    (out, cache)
}

pub(crate) fn channel_mix<T: Real>(
    p: &LayerParams<T>,
    x: &Matrix<T>,
    st: &mut LayerState<T>,
    record: bool,
) -> (Matrix<T>, Option<ChannelMixCache<T>>) {
    let (n, inv) = norm_rows(x, &p.ffn_norm);
    let prev0 = st.shift_channel.clone();
    let s = shift_rows(&n, &p.mu_channel, &mut st.shift_channel);
    let u = project(&s, &p.w_up);
    let h = u.map(|z| {
        let r = z.max(T::zero()).wide();
        T::of(r * r)
    });
    let out = project(&h, &p.w_down);
    let cache = record.then(|| ChannelMixCache {
        x: x.clone(),
        inv,
        n,
        prev0,
        s,
        u,
        h,
    });
    (out, cache)
}

fn add_rows<T: Real>(x: &Matrix<T>, delta: &Matrix<T>) -> Matrix<T> {
    let mut out = x.clone();
    for (o, &dv) in out.as_mut_slice().iter_mut().zip(delta.as_slice()) {
        *o = *o + dv;
    }
    out
}

fn check_input<T: Real>(params: &BlockParams<T>, x: &Matrix<T>, state: &RecurrentState<T>) -> Result<()> {
    if x.cols() != params.config.d_model {
        return Err(Error::shape(x.shape(), params.config.d_model, "stack input width"));
    }
    if state.config() != params.config {
        return Err(Error::shape(state.config(), params.config, "state/params config"));
    }
    Ok(())
}

fn run_stack<T: Real>(
    params: &BlockParams<T>,
    x: &Matrix<T>,
    state: &mut RecurrentState<T>,
    record: bool,
) -> Result<(Matrix<T>, StackCache<T>)> {
    check_input(params, x, state)?;
    let mut cache = StackCache {
        recorded: record,
        rows: x.rows(),
        layers: Vec::new(),
    };
    let mut h = x.clone();
    for (layer, st) in params.layers.iter().zip(state.layers.iter_mut()) {
        let (att, tc) = time_mix(&params.config, layer, &h, st, record);
        let mid = add_rows(&h, &att);
        let (ffn, cc) = channel_mix(layer, &mid, st, record);
        h = add_rows(&mid, &ffn);
        if let (Some(time), Some(channel)) = (tc, cc) {
            cache.layers.push(LayerCache { time, channel });
        }
    }
    Ok((h, cache))
}

/// Time-mixing sublayer for one position.
pub fn time_mixing_forward<T: Real>(
    params: &BlockParams<T>,
    layer: usize,
    x_t: &[T],
    state: &mut RecurrentState<T>,
) -> Result<Vec<T>> {
    let (p, st) = layer_refs(params, layer, x_t, state)?;
    let x = Matrix::row_vector(x_t.to_vec());
    Ok(time_mix(&params.config, p, &x, st, false).0.into_vec())
}

/// Channel-mixing sublayer for one position.
pub fn channel_mixing_forward<T: Real>(
    params: &BlockParams<T>,
    layer: usize,
    x_t: &[T],
    state: &mut RecurrentState<T>,
) -> Result<Vec<T>> {
    let (p, st) = layer_refs(params, layer, x_t, state)?;
    let x = Matrix::row_vector(x_t.to_vec());
    Ok(channel_mix(p, &x, st, false).0.into_vec())
}

fn layer_refs<'a, T: Real>(
    params: &'a BlockParams<T>,
    layer: usize,
    x_t: &[T],
    state: &'a mut RecurrentState<T>,
) -> Result<(&'a LayerParams<T>, &'a mut LayerState<T>)> {
    if x_t.len() != params.config.d_model {
        return Err(Error::shape(x_t.len(), params.config.d_model, "sublayer input width"));
    }
    if state.config() != params.config {
        return Err(Error::shape(state.config(), params.config, "state/params config"));
    }
    let p = params
        .layers
        .get(layer)
        .ok_or_else(|| Error::Parameter(format!("layer {layer} out of range")))?;
    Ok((p, &mut state.layers[layer]))
}

/// Advances the stack by one position, returning the residual stream output.
pub fn stack_step<T: Real>(
    params: &BlockParams<T>,
    x_t: &[T],
    state: &mut RecurrentState<T>,
) -> Result<Vec<T>> {
    let x = Matrix::row_vector(x_t.to_vec());
    Ok(run_stack(params, &x, state, false)?.0.into_vec())
}

/// Runs the stack over every row of `x` in order, carrying `state`.
///
/// Bitwise identical to folding [`stack_step`] over the rows.
pub fn stack_sequence<T: Real>(
    params: &BlockParams<T>,
    x: &Matrix<T>,
    state: &mut RecurrentState<T>,
) -> Result<Matrix<T>> {
    if x.rows() == 0 {
        return Err(Error::Parameter("stack_sequence needs at least one row".into()));
    }
    Ok(run_stack(params, x, state, false)?.0)
}

/// [`stack_sequence`] that also records the activations needed for backward.
pub fn stack_sequence_cached<T: Real>(
    params: &BlockParams<T>,
    x: &Matrix<T>,
    state: &mut RecurrentState<T>,
) -> Result<(Matrix<T>, StackCache<T>)> {
    if x.rows() == 0 {
        return Err(Error::Parameter("stack_sequence needs at least one row".into()));
    }
    run_stack(params, x, state, true)
}
