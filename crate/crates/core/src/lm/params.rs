use crate::codec::TEXT_VOCAB;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, SeededRng};
use crate::recurrent::{BlockConfig, BlockParams, INIT_STD};

/// Scale of the seeded normal initialization of every embedding table.
pub const EMBED_STD: f64 = 1.0;

/// Dimensions of the whole language model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LmConfig {
    pub block: BlockConfig,
    /// Number of codewords; the audio head has one extra column for EOS.
    pub speech_vocab: usize,
}

impl LmConfig {
    pub fn new(block: BlockConfig, speech_vocab: usize) -> Result<Self> {
        if speech_vocab == 0 || speech_vocab >= u32::MAX as usize {
            return Err(Error::Config(format!("invalid speech vocabulary {speech_vocab}")));
        }
        Ok(Self {
            block,
            speech_vocab,
        })
    }

    pub fn text_vocab(&self) -> usize {
        TEXT_VOCAB as usize
    }

    /// Width of the logit rows: codewords plus EOS.
    pub fn logit_width(&self) -> usize {
        self.speech_vocab + 1
    }

    pub fn eos(&self) -> u32 {
        self.speech_vocab as u32
    }
}

/// Embedding tables and audio head around the block stack.
///
/// There is deliberately no embedding row for EOS: it exists only as the last
/// audio-head column.
#[derive(Clone, Debug, PartialEq)]
pub struct LmParams<T = f32> {
    pub text_embedding: Matrix<T>,
    pub speech_embedding: Matrix<T>,
    pub sos_embedding: Matrix<T>,
    pub task_id_embedding: Matrix<T>,
    pub audio_head: Matrix<T>,
}

impl<T: Real> LmParams<T> {
    pub fn zeros(cfg: &LmConfig) -> Self {
        let d = cfg.block.d_model;
        Self {
            text_embedding: Matrix::zeros(cfg.text_vocab(), d),
            speech_embedding: Matrix::zeros(cfg.speech_vocab, d),
            sos_embedding: Matrix::zeros(1, d),
            task_id_embedding: Matrix::zeros(1, d),
            audio_head: Matrix::zeros(d, cfg.logit_width()),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix<T>); 5] {
        [
            ("text_embedding", &self.text_embedding),
            ("speech_embedding", &self.speech_embedding),
            ("sos_embedding", &self.sos_embedding),
            ("task_id_embedding", &self.task_id_embedding),
            ("audio_head", &self.audio_head),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix<T>); 5] {
        [
            ("text_embedding", &mut self.text_embedding),
            ("speech_embedding", &mut self.speech_embedding),
            ("sos_embedding", &mut self.sos_embedding),
            ("task_id_embedding", &mut self.task_id_embedding),
            ("audio_head", &mut self.audio_head),
        ]
    }
}

/// Complete set of learnable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub config: LmConfig,
    pub lm: LmParams<T>,
    pub blocks: BlockParams<T>,
}

impl<T: Real> Model<T> {
    pub fn zeros(config: LmConfig) -> Self {
        Self {
            config,
            lm: LmParams::zeros(&config),
            blocks: BlockParams::zeros(config.block),
        }
    }

    /// Seeded initialization: embeddings ~ N(0, EMBED_STD²), head and
    /// projections ~ N(0, 0.02²), block gains/mixes/decays at their defaults.
    pub fn init(config: LmConfig, rng: &mut SeededRng) -> Self {
        let mut blocks_rng = rng.split(1);
        let mut rng = rng.split(2);
        let mut lm = LmParams::zeros(&config);
        for (name, m) in lm.tensors_mut() {
            let std = if name == "audio_head" { INIT_STD } else { EMBED_STD };
            for v in m.as_mut_slice() {
                *v = T::of(std * rng.normal());
            }
        }
        Self {
            config,
            lm,
            blocks: BlockParams::init(config.block, &mut blocks_rng),
        }
    }

    /// Every tensor in checkpoint order: LM tables first, then the blocks.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = self
            .lm
            .tensors()
            .into_iter()
            .map(|(n, m)| (n.to_string(), m))
            .collect();
        out.extend(self.blocks.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out: Vec<(String, &mut Matrix<T>)> = self
            .lm
            .tensors_mut()
            .into_iter()
            .map(|(n, m)| (n.to_string(), m))
            .collect();
        out.extend(self.blocks.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut out = Model::<U>::zeros(self.config);
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Keeps the token-shift mixes inside `[0, 1]` after an update.
    pub fn clamp_mix(&mut self) {
        self.blocks.clamp_mix();
    }
}
