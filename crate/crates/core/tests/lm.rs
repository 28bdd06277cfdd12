use proptest::prelude::*;
use voxrnn::codec::{text_encode, Role, TokenId, TokenSequence, N_SPECIALS};
use voxrnn::lm::{
    assemble, head_logits, lm_backward, lm_forward, lm_forward_cached, lm_loss, lm_loss_grad,
    LmConfig, Model, TrainingExample,
};
use voxrnn::numerics::{finite_diff_grad, Matrix, SeededRng};
use voxrnn::recurrent::{stack_sequence, BlockConfig, RecurrentState};
use voxrnn::Error;

fn example(text: &[TokenId], prompt: &[TokenId], target: &[TokenId], vocab: usize) -> TrainingExample {
    TrainingExample::new(
        TokenSequence::text(text.to_vec()).unwrap(),
        TokenSequence::speech(Role::PromptSpeech, prompt.to_vec(), vocab).unwrap(),
        TokenSequence::speech(Role::TargetSpeech, target.to_vec(), vocab).unwrap(),
    )
    .unwrap()
}

fn random_example(rng: &mut SeededRng, vocab: usize, max_len: usize) -> TrainingExample {
    let text: Vec<TokenId> = (0..rng.below(max_len)).map(|_| rng.below(272) as TokenId).collect();
    let prompt: Vec<TokenId> =
        (0..rng.below(max_len)).map(|_| rng.below(vocab) as TokenId).collect();
    let target: Vec<TokenId> =
        (0..1 + rng.below(max_len)).map(|_| rng.below(vocab) as TokenId).collect();
    example(&text, &prompt, &target, vocab)
}

fn small_model(seed: u64, vocab: usize) -> Model {
    let cfg = LmConfig::new(BlockConfig::new(16, 2, 2).unwrap(), vocab).unwrap();
    Model::init(cfg, &mut SeededRng::new(seed))
}

fn bits(m: &Matrix) -> Vec<u32> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn golden_layout() {
    let model = small_model(0, 1024);
    let ex = example(&[5, 6], &[100], &[200, 201], 1024);
    let p = assemble(&model.config, &model.lm, &ex).unwrap();
    assert_eq!(p.len(), 7);
    assert_eq!(p.segments.sizes(), [1, 2, 1, 1, 2]);
    assert_eq!(p.masked_count(), 3);
    assert_eq!(p.loss_mask, vec![false, false, false, false, true, true, true]);
    let masked: Vec<usize> = (0..7).filter(|&t| p.loss_mask[t]).map(|t| p.targets[t]).collect();
    assert_eq!(masked, vec![200, 201, 1024]);
    assert_eq!(p.embeddings.row(1), model.lm.text_embedding.row(5));
    assert_eq!(p.embeddings.row(4), model.lm.speech_embedding.row(100));
    assert_eq!(p.embeddings.row(3), model.lm.task_id_embedding.row(0));
}

#[test]
fn minimal_layout() {
    let model = small_model(0, 1024);
    let p = assemble(&model.config, &model.lm, &example(&[], &[], &[9], 1024)).unwrap();
    assert_eq!(p.len(), 3);
    assert_eq!(p.segments.sizes(), [1, 0, 1, 0, 1]);
    assert_eq!(p.loss_mask, vec![false, true, true]);
    assert_eq!((p.targets[1], p.targets[2]), (9, 1024));
}

#[test]
fn empty_target_and_bad_ids_are_rejected() {
    let empty = TokenSequence::empty(Role::TargetSpeech);
    assert!(TrainingExample::new(
        text_encode("a", false),
        TokenSequence::empty(Role::PromptSpeech),
        empty
    )
    .is_err());
    let model = small_model(0, 16);
    let big = example(&[], &[], &[900], 1024);
    assert!(matches!(assemble(&model.config, &model.lm, &big), Err(Error::Data(_))));
}

#[test]
fn spans_decode_back_to_inputs() {
    let model = small_model(1, 64);
    let mut rng = SeededRng::new(2);
    for _ in 0..100 {
        let ex = random_example(&mut rng, 64, 12);
        let p = assemble(&model.config, &model.lm, &ex).unwrap();
        let (t, pr, tg) = p.decode_spans();
        assert_eq!(t, ex.text.ids());
        assert_eq!(pr, ex.prompt_speech.ids());
        assert_eq!(tg, ex.target_speech.ids());
        assert_eq!(p.masked_count(), ex.target_speech.len() + 1);
    }
}

#[test]
fn zero_head_gives_uniform_loss() {
    let mut model = small_model(3, 1024);
    model.lm.audio_head.fill(0.0);
    let mut rng = SeededRng::new(4);
    for _ in 0..5 {
        let ex = random_example(&mut rng, 1024, 10);
        let p = assemble(&model.config, &model.lm, &ex).unwrap();
        let logits = lm_forward(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
        let (loss, n) = lm_loss(&logits, &p).unwrap();
        assert!((loss - 1025f64.ln()).abs() < 1e-3);
        assert!((loss - 6.9324).abs() < 1e-3);
        assert_eq!(n, ex.target_speech.len() + 1);
    }
}

#[test]
fn saturated_correct_logits_give_near_zero_loss() {
    let model = small_model(5, 32);
    let p = assemble(&model.config, &model.lm, &example(&[20], &[1, 2], &[3, 4, 5], 32)).unwrap();
    let mut logits = Matrix::<f32>::zeros(p.len(), 33);
    for t in 0..p.len() {
        logits.set(t, p.targets[t], 1e4);
    }
    assert!(lm_loss(&logits, &p).unwrap().0 < 1e-3);
}

#[test]
fn loss_ignores_unsupervised_targets() {
    let model = small_model(6, 64);
    let mut rng = SeededRng::new(7);
    for _ in 0..100 {
        let ex = random_example(&mut rng, 64, 8);
        let mut p = assemble(&model.config, &model.lm, &ex).unwrap();
        let logits = lm_forward(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
        let base = lm_loss(&logits, &p).unwrap();
        let free: Vec<usize> = (0..p.len()).filter(|&t| !p.loss_mask[t]).collect();
        for &t in &free {
            p.targets[t] = rng.below(65);
        }
        let again = lm_loss(&logits, &p).unwrap();
        assert_eq!(base.0.to_bits(), again.0.to_bits());
        assert_eq!(base.1, again.1);
    }
}

#[test]
fn forward_matches_manual_composition() {
    let model = small_model(8, 64);
    let mut rng = SeededRng::new(9);
    let ex = random_example(&mut rng, 64, 10);
    let p = assemble(&model.config, &model.lm, &ex).unwrap();
    let logits = lm_forward(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
    // rebuild the embedding rows by hand, run the stack, then the head
    let mut rows = vec![model.lm.sos_embedding.row(0).to_vec()];
    rows.extend(ex.text.ids().iter().map(|&i| model.lm.text_embedding.row(i as usize).to_vec()));
    rows.push(model.lm.task_id_embedding.row(0).to_vec());
    for &i in ex.prompt_speech.ids().iter().chain(ex.target_speech.ids()) {
        rows.push(model.lm.speech_embedding.row(i as usize).to_vec());
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let h = stack_sequence(&model.blocks, &x, &mut RecurrentState::fresh(model.config.block)).unwrap();
    let manual = h.matmul(&model.lm.audio_head).unwrap();
    assert_eq!(bits(&logits), bits(&manual));
    assert_eq!(bits(&head_logits(&model, &h)), bits(&manual));
}

#[test]
fn logits_have_the_prefix_property() {
    let model = small_model(10, 64);
    let p = assemble(&model.config, &model.lm, &example(&[30, 31, 32], &[1, 2], &[3, 4, 5, 6], 64))
        .unwrap();
    let full = lm_forward(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
    for t in 0..p.len() {
        let mut q = p.clone();
        q.embeddings = Matrix::from_vec(t + 1, 16, p.embeddings.as_slice()[..(t + 1) * 16].to_vec())
            .unwrap();
        q.tokens.truncate(t + 1);
        let part = lm_forward(&model, &q, &mut RecurrentState::fresh(model.config.block)).unwrap();
        assert_eq!(bits(&part), bits(&full)[..(t + 1) * 65].to_vec());
    }
}

#[test]
fn editing_a_target_token_only_affects_later_positions() {
    let model = small_model(11, 64);
    let target = [3, 4, 5, 6, 7];
    let base_ex = example(&[40], &[9], &target, 64);
    let base = assemble(&model.config, &model.lm, &base_ex).unwrap();
    let lb = lm_forward(&model, &base, &mut RecurrentState::fresh(model.config.block)).unwrap();
    for i in 0..target.len() {
        let mut t2 = target;
        t2[i] = 60;
        let p = assemble(&model.config, &model.lm, &example(&[40], &[9], &t2, 64)).unwrap();
        let l = lm_forward(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
        let pos = p.segments.target_audio.start + i;
        assert_eq!(bits(&l)[..pos * 65], bits(&lb)[..pos * 65]);
        assert_ne!(bits(&l)[pos * 65..], bits(&lb)[pos * 65..]);
    }
}

#[test]
fn prompt_conditions_the_target_logits() {
    let model = small_model(12, 64);
    let a = assemble(&model.config, &model.lm, &example(&[40], &[1, 2, 3], &[5, 6], 64)).unwrap();
    let b = assemble(&model.config, &model.lm, &example(&[40], &[1, 2, 4], &[5, 6], 64)).unwrap();
    let la = lm_forward(&model, &a, &mut RecurrentState::fresh(model.config.block)).unwrap();
    let lb = lm_forward(&model, &b, &mut RecurrentState::fresh(model.config.block)).unwrap();
    let r = a.segments.target_audio.clone();
    assert_ne!(bits(&la)[r.start * 65..r.end * 65], bits(&lb)[r.start * 65..r.end * 65]);
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let model = small_model(13, 64);
    let p = assemble(&model.config, &model.lm, &example(&[40], &[1], &[5, 6], 64)).unwrap();
    let (logits, cache) =
        lm_forward_cached(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
    let g = lm_backward(&model, &p, &cache, &Matrix::zeros(logits.rows(), logits.cols())).unwrap();
    for (name, t) in g.tensors() {
        assert!(t.as_slice().iter().all(|&v| v == 0.0), "{name}");
    }
}

#[test]
fn rows_of_absent_tokens_get_no_gradient() {
    let model = small_model(14, 64);
    let text = text_encode("ab", false);
    let ex = TrainingExample::new(
        text.clone(),
        TokenSequence::speech(Role::PromptSpeech, vec![1, 2], 64).unwrap(),
        TokenSequence::speech(Role::TargetSpeech, vec![5, 6, 7], 64).unwrap(),
    )
    .unwrap();
    let p = assemble(&model.config, &model.lm, &ex).unwrap();
    let (logits, cache) =
        lm_forward_cached(&model, &p, &mut RecurrentState::fresh(model.config.block)).unwrap();
    let (_, _, dl) = lm_loss_grad(&logits, &p).unwrap();
    let g = lm_backward(&model, &p, &cache, &dl).unwrap();
    let used_speech = [1usize, 2, 5, 6, 7];
    for r in 0..64 {
        let nz = g.lm.speech_embedding.row(r).iter().any(|&v| v != 0.0);
        assert_eq!(nz, used_speech.contains(&r), "speech row {r}");
    }
    let used_text: Vec<usize> = text.ids().iter().map(|&i| i as usize).collect();
    for r in 0..272 {
        let nz = g.lm.text_embedding.row(r).iter().any(|&v| v != 0.0);
        assert_eq!(nz, used_text.contains(&r), "text row {r}");
    }
    assert!(used_text.iter().all(|&r| r >= N_SPECIALS as usize));
}

/// f64 model with projections and head at a moderate scale and gains/mixes
/// moved off their defaults, so every parameter group has a visible effect.
fn model64(seed: u64) -> Model<f64> {
    let cfg = LmConfig::new(BlockConfig::new(8, 2, 2).unwrap(), 12).unwrap();
    let mut m = Model::<f32>::init(cfg, &mut SeededRng::new(seed)).cast::<f64>();
    let mut rng = SeededRng::new(seed + 1);
    for (name, t) in m.tensors_mut() {
        let v = t.as_mut_slice();
        if name.starts_with("blocks.") && name.contains(".w_") && !name.ends_with("_bias") {
            v.iter_mut().for_each(|x| *x = 0.3 * rng.normal());
        } else if name == "audio_head" {
            v.iter_mut().for_each(|x| *x = 0.5 * rng.normal());
        } else if name.ends_with("norm") || name.contains(".mu_") {
            v.iter_mut().for_each(|x| *x += rng.uniform_range(-0.3, 0.3));
        } else if name.ends_with("w_bias") {
            v.iter_mut().for_each(|x| *x += rng.uniform_range(-1.0, 1.0));
        }
    }
    m
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Full-model gradient vs central differences on a length-5 packed example
/// (one text byte, one prompt token, one target token).
fn lm_gradient_mismatches(seed: u64, h: f64, tol: f64) -> Vec<String> {
    let model = model64(seed);
    let cfg = model.config;
    let ex = example(&[N_SPECIALS + 7], &[3], &[9], 12);
    let loss_of = |m: &Model<f64>| -> f64 {
        let p = assemble(&cfg, &m.lm, &ex).unwrap();
        let logits = lm_forward(m, &p, &mut RecurrentState::fresh(cfg.block)).unwrap();
        lm_loss(&logits, &p).unwrap().0
    };
    let p = assemble(&cfg, &model.lm, &ex).unwrap();
    assert_eq!(p.len(), 5);
    let (logits, cache) = lm_forward_cached(&model, &p, &mut RecurrentState::fresh(cfg.block)).unwrap();
    let (_, _, dl) = lm_loss_grad(&logits, &p).unwrap();
    let grads = lm_backward(&model, &p, &cache, &dl).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.as_slice().to_vec()).collect();
    let names: Vec<String> = grads.tensors().into_iter().map(|(n, _)| n).collect();

    let mut sampler = SeededRng::new(seed + 7);
    let mut bad = Vec::new();
    for (gi, name) in names.iter().enumerate() {
        let len = analytic[gi].len();
        let coords: Vec<usize> = if len <= 50 {
            (0..len).collect()
        } else {
            (0..50).map(|_| sampler.below(len)).collect()
        };
        for c in coords {
            let base = model.tensors()[gi].1.as_slice()[c];
            let fd = finite_diff_grad(
                |v| {
                    let mut m = model.clone();
                    m.tensors_mut()[gi].1.as_mut_slice()[c] = v[0];
                    loss_of(&m)
                },
                &[base],
                h,
            )
            .unwrap()[0];
            if rel(analytic[gi][c], fd) > tol {
                bad.push(format!("{name}[{c}]: {} vs {fd}", analytic[gi][c]));
            }
        }
    }
    bad
}

#[test]
fn lm_gradients_match_finite_differences() {
    let bad = lm_gradient_mismatches(22, 1e-3, 1e-3);
    assert!(bad.is_empty(), "{bad:#?}");
}

/// See the recurrent tests: h = 1e-3 carries truncation error near norm
/// singularities and relu kinks, so the multi-seed sweep uses a finer step.
#[test]
fn lm_gradients_agree_with_fine_differences_across_seeds() {
    for seed in 200..206 {
        let bad = lm_gradient_mismatches(seed, 1e-5, 1e-3);
        assert!(bad.is_empty(), "seed {seed}: {bad:#?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spans_partition_the_sequence(
        text in prop::collection::vec(0u32..272, 0..20),
        prompt in prop::collection::vec(0u32..32, 0..20),
        target in prop::collection::vec(0u32..32, 1..20),
    ) {
        let model = small_model(0, 32);
        let p = assemble(&model.config, &model.lm, &example(&text, &prompt, &target, 32)).unwrap();
        let spans = p.segments.spans();
        prop_assert_eq!(spans[0].start, 0);
        for w in spans.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        prop_assert_eq!(spans[4].end, p.len());
        prop_assert_eq!(p.segments.sizes(), [1, text.len(), 1, prompt.len(), target.len()]);
        prop_assert_eq!(p.masked_count(), target.len() + 1);
        for t in 0..p.len() {
            if p.loss_mask[t] {
                prop_assert!(p.targets[t] <= 32);
            }
        }
    }
}
