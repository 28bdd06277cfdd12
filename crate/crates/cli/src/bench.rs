//! Per-token decode latency and auxiliary memory: the recurrent stack versus
//! a causal dot-product attention stack with a growing key/value cache.
//!
//! Both stacks share the block configuration, the input embeddings, and the
//! row-times-matrix kernel, and neither applies the output head, so the
//! comparison isolates the sequence-mixing mechanism.

use std::time::Instant;

use anyhow::Result;
use voxrnn::lm::{LmConfig, Model};
use voxrnn::numerics::{dot, rms_norm, Matrix, SeededRng};
use voxrnn::recurrent::{stack_step, BlockConfig, RecurrentState, FFN_EXPANSION, INIT_STD, NORM_EPS};

/// Bytes per cached key or value element.
const CACHE_ELEM_BYTES: usize = std::mem::size_of::<f32>();

struct AttentionLayer {
    norm_attn: Vec<f32>,
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    norm_ffn: Vec<f32>,
    w_up: Matrix,
    w_down: Matrix,
}

/// Pre-norm causal attention blocks with a squared-ReLU feed-forward, shaped
/// like the recurrent stack.
pub struct AttentionBaseline {
    config: BlockConfig,
    layers: Vec<AttentionLayer>,
}

/// Keys and values of every past position, per layer, as flat `T × d` rows.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
}

impl KvCache {
    pub fn new(layers: usize) -> Self {
        Self {
            keys: vec![Vec::new(); layers],
            values: vec![Vec::new(); layers],
        }
    }

    pub fn byte_size(&self) -> usize {
        let elems: usize = self.keys.iter().chain(&self.values).map(Vec::len).sum();
        elems * CACHE_ELEM_BYTES
    }

    fn truncate(&mut self, positions: usize, d: usize) {
        for v in self.keys.iter_mut().chain(&mut self.values) {
            v.truncate(positions * d);
        }
    }
}

/// Analytic cache size after `t` positions.
pub fn cache_bytes_at(config: BlockConfig, t: usize) -> usize {
    config.n_layers * 2 * t * config.d_model * CACHE_ELEM_BYTES
}

fn row_times(x: &[f32], w: &Matrix) -> Vec<f32> {
    Matrix::row_vector(x.to_vec())
        .matmul(w)
        .expect("baseline weights match the model width")
        .into_vec()
}

impl AttentionBaseline {
    pub fn init(config: BlockConfig, rng: &mut SeededRng) -> Self {
        let d = config.d_model;
        let mut dense = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| (rng.normal() * INIT_STD) as f32).collect();
            Matrix::from_vec(rows, cols, data).expect("sizes agree")
        };
        let layers = (0..config.n_layers)
            .map(|_| AttentionLayer {
                norm_attn: vec![1.0; d],
                wq: dense(d, d),
                wk: dense(d, d),
                wv: dense(d, d),
                wo: dense(d, d),
                norm_ffn: vec![1.0; d],
                w_up: dense(d, d * FFN_EXPANSION),
                w_down: dense(d * FFN_EXPANSION, d),
            })
            .collect();
        Self { config, layers }
    }

    /// Processes one position, appending its keys and values to `cache`.
    pub fn step(&self, x: &[f32], cache: &mut KvCache) -> Vec<f32> {
        let d = self.config.d_model;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut x = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let h = rms_norm(&x, &layer.norm_attn, NORM_EPS).expect("width");
            let q = row_times(&h, &layer.wq);
            cache.keys[l].extend(row_times(&h, &layer.wk));
            cache.values[l].extend(row_times(&h, &layer.wv));
            let (keys, values) = (&cache.keys[l], &cache.values[l]);
            let t = keys.len() / d;
            let mut mixed = vec![0f32; d];
            let mut scores = vec![0f64; t];
            for head in 0..self.config.n_heads {
                let cols = head * hd..(head + 1) * hd;
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(&q[cols.clone()], &keys[j * d..][cols.clone()]) * scale;
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let mut acc = vec![0f64; hd];
                for (j, &p) in scores.iter().enumerate() {
                    for (a, &v) in acc.iter_mut().zip(&values[j * d..][cols.clone()]) {
                        *a += p * v as f64;
                    }
                }
                for (m, a) in mixed[cols].iter_mut().zip(acc) {
                    *m = (a / total) as f32;
                }
            }
            for (xi, o) in x.iter_mut().zip(row_times(&mixed, &layer.wo)) {
                *xi += o;
            }
            let h = rms_norm(&x, &layer.norm_ffn, NORM_EPS).expect("width");
            let up: Vec<f32> = row_times(&h, &layer.w_up)
                .into_iter()
                .map(|v| v.max(0.0) * v.max(0.0))
                .collect();
            for (xi, o) in x.iter_mut().zip(row_times(&up, &layer.w_down)) {
                *xi += o;
            }
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub t: usize,
    pub recur_us_per_tok: f64,
    pub attn_us_per_tok: f64,
    pub state_bytes: usize,
    pub cache_bytes: usize,
}

pub const REPORT_HEADER: &str = "T recur_us_per_tok attn_us_per_tok state_bytes cache_bytes";

#[derive(Clone, Debug)]
pub struct BenchSettings {
    pub lengths: Vec<usize>,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    pub speech_vocab: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            lengths: vec![64, 128, 256, 512, 1024],
            reps: 32,
            warmup: 4,
            seed: 0,
            speech_vocab: 1024,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// For each `T`, both stacks are advanced through positions `1..T` and then
/// the step at position `T` is timed `reps` times (after `warmup` untimed
/// repetitions), each from the same saved state. Latency is the median.
/// Byte counts are taken after position `T`.
pub fn run_bench(block: BlockConfig, settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    if settings.lengths.is_empty() || settings.lengths.contains(&0) {
        anyhow::bail!("bench lengths must be positive");
    }
    if settings.lengths.windows(2).any(|w| w[0] >= w[1]) {
        anyhow::bail!("bench lengths must be strictly ascending");
    }
    if settings.reps == 0 {
        anyhow::bail!("bench needs at least one repetition");
    }
    let rng = SeededRng::new(settings.seed);
    let model = Model::init(LmConfig::new(block, settings.speech_vocab)?, &mut rng.split(1));
    let baseline = AttentionBaseline::init(block, &mut rng.split(2));
    let mut tokens = rng.split(3);
    let d = block.d_model;

    let mut state = RecurrentState::fresh(block);
    let mut cache = KvCache::new(block.n_layers);
    let mut position = 0;
    let mut rows = Vec::new();
    for &t in &settings.lengths {
        let mut input = || {
            let id = tokens.below(settings.speech_vocab);
            model.lm.speech_embedding.row(id).to_vec()
        };
        while position + 1 < t {
            let x = input();
            stack_step(&model.blocks, &x, &mut state)?;
            baseline.step(&x, &mut cache);
            position += 1;
        }
        let x = input();
        let mut recur = Vec::with_capacity(settings.reps);
        let mut attn = Vec::with_capacity(settings.reps);
        for rep in 0..settings.warmup + settings.reps {
            let mut s = state.clone();
            let started = Instant::now();
            std::hint::black_box(stack_step(&model.blocks, &x, &mut s)?);
            let r = started.elapsed().as_secs_f64() * 1e6;

            let started = Instant::now();
            std::hint::black_box(baseline.step(&x, &mut cache));
            let a = started.elapsed().as_secs_f64() * 1e6;
            cache.truncate(position, d);
            if rep >= settings.warmup {
                recur.push(r);
                attn.push(a);
            }
        }
        stack_step(&model.blocks, &x, &mut state)?;
        baseline.step(&x, &mut cache);
        position += 1;
        rows.push(BenchRow {
            t,
            recur_us_per_tok: median(recur),
            attn_us_per_tok: median(attn),
            state_bytes: state.byte_size(),
            cache_bytes: cache.byte_size(),
        });
    }
    Ok(rows)
}

pub fn render_report(rows: &[BenchRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out += &format!(
            "{} {:.2} {:.2} {} {}\n",
            r.t, r.recur_us_per_tok, r.attn_us_per_tok, r.state_bytes, r.cache_bytes
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_grows_by_one_row_per_layer_and_position() {
        let cfg = BlockConfig::new(8, 2, 3).unwrap();
        let b = AttentionBaseline::init(cfg, &mut SeededRng::new(1));
        let mut cache = KvCache::new(3);
        for t in 1..=5 {
            let y = b.step(&[0.5; 8], &mut cache);
            assert!(y.iter().all(|v| v.is_finite()));
            assert_eq!(cache.byte_size(), cache_bytes_at(cfg, t));
        }
    }

    #[test]
    fn single_position_attends_to_itself() {
        // with one key the softmax weight is 1, so the mixed vector is v
        let cfg = BlockConfig::new(4, 1, 1).unwrap();
        let b = AttentionBaseline::init(cfg, &mut SeededRng::new(2));
        let mut cache = KvCache::new(1);
        let x = [0.3f32, -0.1, 0.7, 0.2];
        let y = b.step(&x, &mut cache);
        let l = &b.layers[0];
        let h = rms_norm(&x, &l.norm_attn, NORM_EPS).unwrap();
        let v = row_times(&h, &l.wv);
        let mut r: Vec<f32> = x.iter().zip(row_times(&v, &l.wo)).map(|(a, b)| a + b).collect();
        let h2 = rms_norm(&r, &l.norm_ffn, NORM_EPS).unwrap();
        let up: Vec<f32> = row_times(&h2, &l.w_up).iter().map(|v| v.max(0.0).powi(2)).collect();
        for (ri, o) in r.iter_mut().zip(row_times(&up, &l.w_down)) {
            *ri += o;
        }
        for (a, b) in y.iter().zip(&r) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
