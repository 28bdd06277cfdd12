use std::time::Instant;

use super::checkpoint::Checkpoint;
use super::optim::{adam_step, AdamState, TrainConfig};
use crate::dataprep::{apply_prompt_drop, CorpusRecord};
use crate::error::{Error, Result};
use crate::lm::{
    assemble, lm_backward_into, lm_forward, lm_forward_cached, lm_loss_grad, Model,
};
use crate::numerics::SeededRng;
use crate::recurrent::RecurrentState;

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: u64,
    /// Mean over the step's examples of each example's masked mean loss.
    pub loss: f64,
    pub masked: usize,
    pub wall_ms: f64,
}

impl std::fmt::Display for StepRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {:.6} {} {:.1}", self.step, self.loss, self.masked, self.wall_ms)
    }
}

/// Training loop state: parameters, optimizer moments, step counter, and
/// the augmentation random stream.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub moments: AdamState,
    pub step: u64,
    rng: SeededRng,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            moments: AdamState::new(model.config),
            rng: SeededRng::new(config.seed).split(0x7a11),
            model,
            config,
            step: 0,
        })
    }

    /// Resumes from a checkpoint; its RNG position and moments are restored.
    pub fn resume(checkpoint: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let config_model = checkpoint.model.config;
        Ok(Self {
            moments: checkpoint.moments.unwrap_or_else(|| AdamState::new(config_model)),
            rng: SeededRng::from_state(checkpoint.rng),
            model: checkpoint.model,
            config,
            step: checkpoint.step,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            moments: Some(self.moments.clone()),
            step: self.step,
            rng: self.rng.state(),
        }
    }

    /// Examples for the next step: consecutive records, cycling the corpus.
    fn batch_indices(&self, n: usize) -> Vec<usize> {
        let acc = self.config.accumulation as u64;
        (0..acc).map(|j| ((self.step * acc + j) % n as u64) as usize).collect()
    }

    /// One optimizer step over `accumulation` examples.
    pub fn step_once(&mut self, records: &[CorpusRecord]) -> Result<StepRecord> {
        if records.is_empty() {
            return Err(Error::Data("training corpus is empty".into()));
        }
        let started = Instant::now();
        let cfg = self.model.config;
        let mut grads = Model::zeros(cfg);
        let mut loss_sum = 0f64;
        let mut masked = 0;
        let indices = self.batch_indices(records.len());
        let weight = 1.0 / indices.len() as f64;
        for i in indices {
            let record = apply_prompt_drop(&records[i], self.config.prompt_drop, &mut self.rng)?;
            let example = record.to_example(cfg.speech_vocab)?;
            let packed = assemble(&cfg, &self.model.lm, &example)?;
            let mut state = RecurrentState::fresh(cfg.block);
            let (logits, cache) = lm_forward_cached(&self.model, &packed, &mut state)?;
            let (loss, count, mut dlogits) = lm_loss_grad(&logits, &packed)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at step {} on record {}",
                    self.step + 1,
                    record.provenance
                )));
            }
            dlogits.scale(weight as f32);
            lm_backward_into(&self.model, &packed, &cache, &dlogits, &mut grads)?;
            loss_sum += loss;
            masked += count;
        }
        self.step += 1;
        adam_step(&mut self.model, &mut grads, &mut self.moments, &self.config, self.step)?;
        Ok(StepRecord {
            step: self.step,
            loss: loss_sum * weight,
            masked,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs until `config.steps` total steps, calling `on_step` after each.
    pub fn run(
        &mut self,
        records: &[CorpusRecord],
        mut on_step: impl FnMut(&StepRecord, &Trainer) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        let mut curve = Vec::new();
        while self.step < self.config.steps as u64 {
            let rec = self.step_once(records)?;
            on_step(&rec, self)?;
            curve.push(rec);
        }
        Ok(curve)
    }
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub curve: Vec<StepRecord>,
    pub checkpoint: Checkpoint,
}

/// Trains `model` on `records` for `config.steps` steps from scratch.
pub fn train(records: &[CorpusRecord], config: TrainConfig, model: Model) -> Result<TrainOutcome> {
    if records.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let mut trainer = Trainer::new(model, config)?;
    let curve = trainer.run(records, |_, _| Ok(()))?;
    Ok(TrainOutcome {
        curve,
        checkpoint: trainer.checkpoint(),
    })
}

/// Teacher-forced metrics over supervised positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    /// Total negative log-likelihood divided by the number of positions.
    pub mean_loss: f64,
    /// Fraction of positions whose argmax (lowest id on ties) is the target.
    pub accuracy: f64,
    pub masked: usize,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Loss and next-token accuracy with ground-truth inputs (no prompt drop).
pub fn evaluate_teacher_forced(model: &Model, records: &[CorpusRecord]) -> Result<EvalReport> {
    let cfg = model.config;
    let mut nll = 0f64;
    let mut correct = 0usize;
    let mut masked = 0usize;
    for record in records {
        record.validate(cfg.speech_vocab).map_err(|e| {
            Error::Config(format!("corpus does not match model vocabulary: {e}"))
        })?;
        let example = record.to_example(cfg.speech_vocab)?;
        let packed = assemble(&cfg, &model.lm, &example)?;
        let logits = lm_forward(model, &packed, &mut RecurrentState::fresh(cfg.block))?;
        let (loss, count) = crate::lm::lm_loss(&logits, &packed)?;
        nll += loss * count as f64;
        masked += count;
        for t in (0..packed.len()).filter(|&t| packed.loss_mask[t]) {
            correct += (argmax(logits.row(t)) == packed.targets[t]) as usize;
        }
    }
    if masked == 0 {
        return Err(Error::EmptyLoss);
    }
    Ok(EvalReport {
        mean_loss: nll / masked as f64,
        accuracy: correct as f64 / masked as f64,
        masked,
    })
}
