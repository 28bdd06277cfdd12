use crate::numerics::Real;
use crate::recurrent::BlockConfig;

/// Per-layer recurrent memory.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState<T = f32> {
    /// `n_heads` row-major `head_dim × head_dim` matrices, concatenated.
    pub wkv: Vec<T>,
    /// Last (normalized) input seen by time mixing.
    pub shift_time: Vec<T>,
    /// Last (normalized) input seen by channel mixing.
    pub shift_channel: Vec<T>,
}

/// The complete inference-time memory of the stack. Its size depends only on
/// the [`BlockConfig`], never on how many tokens have been consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState<T = f32> {
    config: BlockConfig,
    pub layers: Vec<LayerState<T>>,
}

impl<T: Real> RecurrentState<T> {
    pub fn fresh(config: BlockConfig) -> Self {
        let n = config.head_dim();
        let d = config.d_model;
        Self {
            config,
            layers: (0..config.n_layers)
                .map(|_| LayerState {
                    wkv: vec![T::zero(); config.n_heads * n * n],
                    shift_time: vec![T::zero(); d],
                    shift_channel: vec![T::zero(); d],
                })
                .collect(),
        }
    }

    pub fn config(&self) -> BlockConfig {
        self.config
    }

    /// Bytes held by the state tensors.
    pub fn byte_size(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.wkv.len() + l.shift_time.len() + l.shift_channel.len())
            .sum::<usize>()
            * std::mem::size_of::<T>()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.wkv
                .iter()
                .chain(&l.shift_time)
                .chain(&l.shift_channel)
                .all(|v| v.is_finite())
        })
    }

    /// Raw bit pattern of every entry, for exact comparisons.
    pub fn bits(&self) -> Vec<u64> {
        self.layers
            .iter()
            .flat_map(|l| l.wkv.iter().chain(&l.shift_time).chain(&l.shift_channel))
            .map(|v| v.wide().to_bits())
            .collect()
    }
}
