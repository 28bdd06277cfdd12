use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, SeededRng};

/// Dimensions of the recurrent block stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
}

impl BlockConfig {
    /// `n_layers == 0` is accepted and yields an identity stack.
    pub fn new(d_model: usize, n_heads: usize, n_layers: usize) -> Result<Self> {
        if d_model == 0 || n_heads == 0 {
            return Err(Error::Config(format!(
                "d_model ({d_model}) and n_heads ({n_heads}) must be at least 1"
            )));
        }
        if d_model % n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible by n_heads {n_heads}"
            )));
        }
        Ok(Self {
            d_model,
            n_heads,
            n_layers,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.d_model * FFN_EXPANSION
    }
}

pub const FFN_EXPANSION: usize = 4;
/// Initial per-channel decay.
pub const INITIAL_DECAY: f64 = 0.9;
pub const INIT_STD: f64 = 0.02;

/// Learnable tensors of one time-mixing + channel-mixing layer.
///
/// Projections are stored input-major (`d_in × d_out`) so a row of inputs
/// multiplies on the left.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = f32> {
    pub att_norm: Matrix<T>,
    pub mu_time: Matrix<T>,
    pub w_r: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub w_w: Matrix<T>,
    pub w_a: Matrix<T>,
    pub w_g: Matrix<T>,
    pub w_bias: Matrix<T>,
    pub a_bias: Matrix<T>,
    pub wkv_norm: Matrix<T>,
    pub w_o: Matrix<T>,
    pub ffn_norm: Matrix<T>,
    pub mu_channel: Matrix<T>,
    pub w_up: Matrix<T>,
    pub w_down: Matrix<T>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(
            att_norm, mu_time, w_r, w_k, w_v, w_w, w_a, w_g, w_bias, a_bias, wkv_norm, w_o,
            ffn_norm, mu_channel, w_up, w_down
        )
    };
}

impl<T: Real> LayerParams<T> {
    pub fn zeros(cfg: &BlockConfig) -> Self {
        let d = cfg.d_model;
        let f = cfg.ffn_dim();
        Self {
            att_norm: Matrix::zeros(1, d),
            mu_time: Matrix::zeros(1, d),
            w_r: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w_w: Matrix::zeros(d, d),
            w_a: Matrix::zeros(d, d),
            w_g: Matrix::zeros(d, d),
            w_bias: Matrix::zeros(1, d),
            a_bias: Matrix::zeros(1, d),
            wkv_norm: Matrix::zeros(1, d),
            w_o: Matrix::zeros(d, d),
            ffn_norm: Matrix::zeros(1, d),
            mu_channel: Matrix::zeros(1, d),
            w_up: Matrix::zeros(d, f),
            w_down: Matrix::zeros(f, d),
        }
    }

    fn init(cfg: &BlockConfig, std: f64, rng: &mut SeededRng) -> Self {
        let d = cfg.d_model;
        let f = cfg.ffn_dim();
        let mut gauss = |r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| T::of(rng.normal() * std)).collect())
                .expect("sized by construction")
        };
        let w_r = gauss(d, d);
        let w_k = gauss(d, d);
        let w_v = gauss(d, d);
        let w_w = gauss(d, d);
        let w_a = gauss(d, d);
        let w_g = gauss(d, d);
        let w_o = gauss(d, d);
        let w_up = gauss(d, f);
        let w_down = gauss(f, d);
        // w = exp(-exp(bias)) equals INITIAL_DECAY at zero input.
        let decay_bias = (-INITIAL_DECAY.ln()).ln();
        Self {
            att_norm: Matrix::filled(1, d, T::one()),
            mu_time: Matrix::filled(1, d, T::of(0.5)),
            w_r,
            w_k,
            w_v,
            w_w,
            w_a,
            w_g,
            w_bias: Matrix::filled(1, d, T::of(decay_bias)),
            a_bias: Matrix::zeros(1, d),
            wkv_norm: Matrix::filled(1, d, T::one()),
            w_o,
            ffn_norm: Matrix::filled(1, d, T::one()),
            mu_channel: Matrix::filled(1, d, T::of(0.5)),
            w_up,
            w_down,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        macro_rules! list {
            ($($f:ident),*) => { vec![$((stringify!($f), &self.$f)),*] };
        }
        layer_fields!(list)
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        macro_rules! list {
            ($($f:ident),*) => { vec![$((stringify!($f), &mut self.$f)),*] };
        }
        layer_fields!(list)
    }

    /// Clamps token-shift mix coefficients into `[0, 1]`.
    pub fn clamp_mix(&mut self) {
        for m in [&mut self.mu_time, &mut self.mu_channel] {
            for v in m.as_mut_slice() {
                *v = v.max(T::zero()).min(T::one());
            }
        }
    }
}

/// All learnable tensors of the block stack.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T = f32> {
    pub config: BlockConfig,
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> BlockParams<T> {
    pub fn zeros(config: BlockConfig) -> Self {
        Self {
            config,
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(&config)).collect(),
        }
    }

    /// Seeded initialization with the default projection scale.
    pub fn init(config: BlockConfig, rng: &mut SeededRng) -> Self {
        Self::init_with_std(config, INIT_STD, rng)
    }

    pub fn init_with_std(config: BlockConfig, std: f64, rng: &mut SeededRng) -> Self {
        Self {
            config,
            layers: (0..config.n_layers)
                .map(|_| LayerParams::init(&config, std, rng))
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.tensors()
                    .into_iter()
                    .map(move |(n, m)| (format!("blocks.{i}.{n}"), m))
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.tensors_mut()
                    .into_iter()
                    .map(move |(n, m)| (format!("blocks.{i}.{n}"), m))
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> BlockParams<U> {
        let mut out = BlockParams::<U>::zeros(self.config);
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }

    pub fn clamp_mix(&mut self) {
        for l in &mut self.layers {
            l.clamp_mix();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}
