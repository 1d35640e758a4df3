//! Turning command-line settings into training runs.

use hypernet::data::MultiModalDataset;
use hypernet::models::{BetaRule, Family, ModelConfig, ResSchedule};
use hypernet::training::{
    balanced_subset, default_per_class, seeded_rng, train, RunResult, TrainConfig,
    BALANCED_STREAM, SPLIT_STREAM,
};
use hypernet::{Error, Result};
use rayon::prelude::*;

use crate::args::{LabelMode, Settings};
use crate::report::SweepRow;

/// One cell of a sweep for one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub family: Family,
    pub depth: usize,
    /// Resample the training split at this rate before training.
    pub ratio: Option<f64>,
    pub seed: u64,
}

pub fn model_config(settings: &Settings, job: &Job, n_classes: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(job.family, job.depth, n_classes);
    cfg.hidden = settings.hidden;
    cfg.dropout = settings.dropout;
    cfg.seed = job.seed;
    if job.family.is_residual() {
        let d = ResSchedule::default();
        let lambda = match d.beta {
            BetaRule::InverseDepth { lambda } => lambda,
            BetaRule::Constant(_) => unreachable!("default schedule uses inverse depth"),
        };
        cfg.res_schedule = Some(ResSchedule {
            alpha: settings.alpha.unwrap_or(d.alpha),
            beta: BetaRule::InverseDepth {
                lambda: settings.lambda.unwrap_or(lambda),
            },
        });
    }
    cfg
}

pub fn train_config(settings: &Settings, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: settings.epochs,
        learning_rate: settings.lr,
        weight_decay: settings.weight_decay,
        eval_every: settings.eval_every,
        seed,
        ..TrainConfig::default()
    }
}

/// Checks every job's configuration before any training starts, so bad
/// flags fail fast instead of producing a sheet of `nan` rows.
pub fn validate_jobs(settings: &Settings, jobs: &[Job], ds: &MultiModalDataset) -> Result<()> {
    for job in jobs {
        model_config(settings, job, ds.n_classes).validate()?;
        train_config(settings, job.seed).validate()?;
        if let Some(r) = job.ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Validation(format!(
                    "label ratio must lie in (0, 1), got {r}"
                )));
            }
        }
    }
    if settings.per_class == Some(0) {
        return Err(Error::Parameter("--per-class must be positive".into()));
    }
    Ok(())
}

/// The dataset a job trains on: resampled split, then the balanced subset.
pub fn prepare(ds: &MultiModalDataset, settings: &Settings, job: &Job) -> Result<MultiModalDataset> {
    let ds = match job.ratio {
        Some(r) => ds.resplit(r, &mut seeded_rng(job.seed, SPLIT_STREAM))?,
        None => ds.clone(),
    };
    match settings.label_mode {
        LabelMode::Full => Ok(ds),
        LabelMode::Balanced => {
            let per_class = settings
                .per_class
                .unwrap_or_else(|| default_per_class(&ds.labels, &ds.train_mask, ds.n_classes));
            let split = balanced_subset(
                &ds.labels,
                &ds.train_mask,
                ds.n_classes,
                per_class,
                &mut seeded_rng(job.seed, BALANCED_STREAM),
            )?;
            ds.with_masks(split.train_mask, split.eval_mask)
        }
    }
}

pub fn run_job(ds: &MultiModalDataset, settings: &Settings, job: &Job) -> Result<RunResult> {
    let prepared = prepare(ds, settings, job)?;
    train(
        &model_config(settings, job, ds.n_classes),
        &train_config(settings, job.seed),
        &prepared,
    )
}

pub fn to_row(
    ds: &MultiModalDataset,
    settings: &Settings,
    job: &Job,
    outcome: &Result<RunResult>,
    timing: bool,
) -> SweepRow {
    let (final_acc, best_acc, runtime) = match outcome {
        Ok(r) => (r.final_test_accuracy, r.best_test_accuracy, Some(r.elapsed)),
        Err(_) => (f64::NAN, f64::NAN, None),
    };
    SweepRow {
        dataset: ds.name.clone(),
        family: job.family,
        depth: job.depth,
        label_mode: settings.label_mode,
        ratio: job.ratio,
        seed: job.seed,
        final_acc,
        best_acc,
        runtime_s: runtime.filter(|_| timing),
    }
}

/// Runs every job on a pool of `threads` workers. Results come back in job
/// order whatever order they finish in; failures are logged and kept.
pub fn run_all(
    ds: &MultiModalDataset,
    settings: &Settings,
    jobs: &[Job],
    threads: usize,
) -> Vec<Result<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let outcome = run_job(ds, settings, job);
                let ratio = job.ratio.map(|r| format!(" ratio={r}")).unwrap_or_default();
                match &outcome {
                    Ok(r) => eprintln!(
                        "{} depth={}{ratio} seed={}: final_acc={:.4} ({:.1}s)",
                        job.family, job.depth, job.seed, r.final_test_accuracy, r.elapsed
                    ),
                    Err(e) => eprintln!(
                        "{} depth={}{ratio} seed={}: FAILED: {e}",
                        job.family, job.depth, job.seed
                    ),
                }
                outcome
            })
            .collect()
    })
}
