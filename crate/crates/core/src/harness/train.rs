use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::logs::{save_checkpoint, write_manifest, FinalMetrics, Manifest, MetricsRecord, MetricsWriter};
use super::model::{initial_state, sample_rng, Model};
use crate::data::{batch_indices, Dataset, Split};
use crate::dynamics::RelaxationConfig;
use crate::error::{Error, Result};
use crate::learners::NudgeConfig;

/// More than this fraction of diverged samples aborts a batch.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;

/// Number of leading epochs summed by [`cumulative_loss`].
pub const CUMULATIVE_EPOCHS: usize = 5;

const EVAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub records: Vec<MetricsRecord>,
    pub final_accuracy: f64,
    pub cumulative_loss: f64,
}

/// Sum of batch-mean free-equilibrium costs over epochs `1..=5`.
pub fn cumulative_loss(records: &[MetricsRecord]) -> f64 {
    records
        .iter()
        .filter(|r| !r.is_eval() && r.epoch <= CUMULATIVE_EPOCHS)
        .filter_map(|r| r.cost)
        .sum()
}

pub fn free_config(cfg: &RunConfig) -> RelaxationConfig {
    RelaxationConfig::fixed_steps(cfg.dt, cfg.n_free)
}

pub fn nudge_config(cfg: &RunConfig) -> Result<NudgeConfig> {
    NudgeConfig::new(cfg.beta, RelaxationConfig::fixed_steps(cfg.dt, cfg.n_nudge))
}

/// Fraction of samples whose free-equilibrium argmax equals the label.
/// The test relaxation reuses the training `n_free`; diverged samples count
/// as errors.
pub fn evaluate(model: &Model, data: &Dataset, relax_cfg: &RelaxationConfig, seed: u64) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let n = model.n_dyn();
    let correct: usize = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, EVAL_STREAM, i as u64);
            let x_init = initial_state(n, &mut rng);
            match model.classify(&data.input(i), &x_init, relax_cfg) {
                Ok(p) => usize::from(p == data.label(i)),
                Err(_) => 0,
            }
        })
        .sum();
    correct as f64 / data.len() as f64
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Trains from the configured initialization. `sink` sees every record as
/// it is produced.
pub fn run_training(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    sink: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let model = Model::init(cfg, train.n_features())?;
    train_model(cfg, model, train, test, sink)
}

/// Trains an existing model.
pub fn train_model(
    cfg: &RunConfig,
    mut model: Model,
    train: &Dataset,
    test: &Dataset,
    sink: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let free_cfg = free_config(cfg);
    let nudge = nudge_config(cfg)?;
    let n = model.n_dyn();
    let start = Instant::now();
    let mut records = Vec::new();
    let mut accuracy = 0.0;

    for epoch in 1..=cfg.epochs {
        let batches = batch_indices(train.len(), cfg.batch_size, cfg.seed, epoch as u64)?;
        for (b, idx) in batches.iter().enumerate() {
            let snapshot = &model;
            let outcomes: Vec<_> = idx
                .par_iter()
                .map(|&i| {
                    let mut rng = sample_rng(cfg.seed, epoch as u64, i as u64);
                    let x_init = initial_state(n, &mut rng);
                    snapshot.sample_step(cfg.method, &train.input(i), train.label(i), &x_init, &free_cfg, &nudge)
                })
                .collect();

            let mut sum = model.gradient_layout();
            let mut ok = Vec::with_capacity(outcomes.len());
            let mut diverged = 0usize;
            let mut first_error = None;
            for o in outcomes {
                match o {
                    Ok(s) if s.grads.is_finite() => ok.push(s),
                    Ok(_) => diverged += 1,
                    Err(e @ Error::Divergence { .. }) => {
                        diverged += 1;
                        first_error.get_or_insert(e.to_string());
                    }
                    Err(e) => return Err(e),
                }
            }
            if diverged as f64 > MAX_DIVERGED_FRACTION * idx.len() as f64 {
                return Err(Error::Divergence {
                    step: b,
                    reason: format!(
                        "{diverged} of {} samples diverged in epoch {epoch}, batch {b}: {}",
                        idx.len(),
                        first_error.unwrap_or_else(|| "non-finite gradient".into())
                    ),
                });
            }
            // Fixed summation order keeps runs independent of the thread count.
            for s in &ok {
                sum.axpy(1.0, &s.grads);
            }
            if !ok.is_empty() {
                sum.scale(1.0 / ok.len() as f64);
                model.apply_update(&sum, cfg)?;
            }
            let rec = MetricsRecord {
                epoch,
                batch: Some(b),
                cost: mean(ok.iter().map(|s| s.cost)),
                accuracy: None,
                r_str: model.r_str().ok(),
                r_jac: mean(ok.iter().filter_map(|s| s.r_jac)),
                wall_ms: start.elapsed().as_millis(),
            };
            sink(&rec)?;
            records.push(rec);
        }

        accuracy = evaluate(&model, test, &free_cfg, cfg.seed);
        let rec = MetricsRecord {
            epoch,
            batch: None,
            cost: None,
            accuracy: Some(accuracy),
            r_str: model.r_str().ok(),
            r_jac: None,
            wall_ms: start.elapsed().as_millis(),
        };
        sink(&rec)?;
        records.push(rec);
    }

    let cumulative = cumulative_loss(&records);
    Ok(RunOutcome {
        model,
        records,
        final_accuracy: accuracy,
        cumulative_loss: cumulative,
    })
}

/// Training and test sets with the configured subsets applied.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let mut train = Dataset::load(&cfg.data_dir, Split::Train)?;
    let mut test = Dataset::load(&cfg.data_dir, Split::Test)?;
    if let Some(n) = cfg.train_subset {
        train = train.head(n);
    }
    if let Some(n) = cfg.test_subset {
        test = test.head(n);
    }
    Ok((train, test))
}

/// Output file locations inside a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            metrics: dir.join("metrics.csv"),
            checkpoint: dir.join("checkpoint.json"),
            manifest: dir.join("manifest.json"),
        }
    }
}

/// Trains and writes metrics, checkpoint and manifest to `cfg.output_dir`.
pub fn run_to_dir(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<(RunOutcome, RunPaths)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|source| Error::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let paths = RunPaths::new(&cfg.output_dir);
    if paths.metrics.exists() {
        fs::remove_file(&paths.metrics).map_err(|source| Error::Io {
            path: paths.metrics.clone(),
            source,
        })?;
    }
    let mut writer = MetricsWriter::open(&paths.metrics)?;
    let outcome = run_training(cfg, train, test, &mut |r| writer.write(r))?;
    save_checkpoint(&paths.checkpoint, &outcome.model)?;
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        metrics_file: paths.metrics.clone(),
        checkpoint_file: paths.checkpoint.clone(),
        final_metrics: FinalMetrics {
            test_accuracy: outcome.final_accuracy,
            cumulative_loss: outcome.cumulative_loss,
            r_str: outcome.model.r_str().ok(),
            epochs_completed: cfg.epochs,
        },
    };
    write_manifest(&paths.manifest, &manifest)?;
    Ok((outcome, paths))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub cumulative_losses: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Runs `cfg.repetitions` seeds `cfg.seed, cfg.seed + 1, ...`.
pub fn sweep(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    on_run: &mut dyn FnMut(u64, &RunOutcome),
) -> Result<SweepSummary> {
    cfg.validate()?;
    let mut seeds = Vec::new();
    let mut accuracies = Vec::new();
    let mut losses = Vec::new();
    for r in 0..cfg.repetitions as u64 {
        let run = RunConfig {
            seed: cfg.seed + r,
            ..cfg.clone()
        };
        let out = run_training(&run, train, test, &mut |_| Ok(()))?;
        on_run(run.seed, &out);
        seeds.push(run.seed);
        accuracies.push(out.final_accuracy);
        losses.push(out.cumulative_loss);
    }
    let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
    Ok(SweepSummary {
        seeds,
        accuracies,
        cumulative_losses: losses,
        mean_accuracy,
        std_accuracy,
    })
}
