use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use voxrnn::dataprep::read_corpus;
use voxrnn::lm::Model;
use voxrnn::numerics::SeededRng;
use voxrnn::trainer::{evaluate_teacher_forced, EvalReport, StepRecord, Trainer};

use crate::config::RunConfig;

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    /// Replaces the configuration's seed.
    pub seed: Option<u64>,
    /// Replaces the configuration's step count.
    pub steps: Option<usize>,
    /// Loss log path; defaults to `<out>.loss.log`.
    pub log: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub curve: Vec<StepRecord>,
    pub eval: EvalReport,
    pub log: PathBuf,
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Model initialization used by `train`; exposed so callers can reproduce
/// the starting point of a run.
pub fn initial_model(config: &RunConfig, speech_vocab: usize) -> Result<Model> {
    let cfg = config.lm_config(speech_vocab)?;
    Ok(Model::init(cfg, &mut SeededRng::new(config.seed)))
}

/// Trains on a prepared corpus directory, streaming one loss line per step
/// (`step loss masked ms`) to the log and writing the final checkpoint.
pub fn run_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary> {
    let mut config = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.train.steps = steps;
    }
    let corpus = read_corpus(&args.data)?;
    let model = initial_model(&config, corpus.manifest.speech_vocab)?;
    let mut trainer = Trainer::new(model, config.train_config())?;

    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".loss.log"));
    let mut log = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let every = config.train.checkpoint_every;
    let curve = trainer.run(&corpus.records, |rec, t| {
        writeln!(log, "{rec}")
            .and_then(|_| log.flush())
            .map_err(|source| voxrnn::Error::Io {
                context: format!("writing {}", log_path.display()),
                source,
            })?;
        if every > 0 && rec.step % every == 0 {
            t.checkpoint().save(&sibling(&args.out, &format!(".step{}", rec.step)))?;
        }
        Ok(())
    });
    let curve = curve.with_context(|| format!("training on {}", args.data.display()))?;
    trainer.checkpoint().save(&args.out)?;

    let eval = evaluate_teacher_forced(&trainer.model, &corpus.records)?;
    if let Some(last) = curve.last() {
        writeln!(out, "steps {} final_loss {:.6}", last.step, last.loss)?;
    } else {
        writeln!(out, "steps 0")?;
    }
    writeln!(
        out,
        "teacher_forced loss {:.6} accuracy {:.4} positions {}",
        eval.mean_loss, eval.accuracy, eval.masked
    )?;
    writeln!(out, "wrote {} and {}", args.out.display(), log_path.display())?;
    Ok(TrainSummary {
        curve,
        eval,
        log: log_path,
    })
}
