//! Experiment runner: datasets, training, gradient checks and the
//! oscillator comparison.

pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod toy;
pub mod train;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rhel_core::hssm::checkpoint::save_checkpoint;
use serde::Serialize;

use config::{DataSpec, ExperimentConfig};
use data::{load_csv_dataset, make_synthetic_splits, DatasetSplits};
pub use error::{LabError, Result};

fn provenance(cfg: &ExperimentConfig) -> String {
    format!("seed={} config_hash={}", cfg.seed, cfg.hash())
}

/// Builds or loads the configured train/val/test splits.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<DatasetSplits> {
    match cfg.data()? {
        DataSpec::Synthetic {
            task,
            n_train,
            n_val,
            n_test,
            length,
        } => Ok(make_synthetic_splits(*task, [*n_train, *n_val, *n_test], *length, cfg.seed)),
        DataSpec::Csv { train, val, test, task } => Ok(DatasetSplits {
            train: load_csv_dataset(train, *task)?,
            val: load_csv_dataset(val, *task)?,
            test: load_csv_dataset(test, *task)?,
        }),
    }
}

/// Finite-difference gates over every analytic derivative.
pub fn certify(cfg: &ExperimentConfig) -> Result<()> {
    rhel_core::hssm::certify_all(cfg.seed)?;
    Ok(())
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.clone())
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<gradcheck::GradcheckReport> {
    certify(cfg)?;
    let splits = load_splits(cfg)?;
    let report = gradcheck::gradcheck_report(cfg, &splits.train)?;
    write_json(&out_dir(cfg)?.join("gradcheck.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub schema: u32,
    pub seed: u64,
    pub config_hash: String,
    pub algorithm: rhel_core::hssm::Algorithm,
    pub task: config::TaskKind,
    pub test_loss: f64,
    /// Accuracy for classification, MSE for regression.
    pub test_metric: f64,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(train::TrainOutcome, TrainSummary)> {
    certify(cfg)?;
    let splits = load_splits(cfg)?;
    let dir = out_dir(cfg)?;
    let (seed, hash) = (cfg.seed, cfg.hash());
    let log_path = dir.join("train_log.csv");
    fs::write(&log_path, format!("{}\n", train::LOG_HEADER))?;
    let outcome = train::fit(cfg, &splits, |rec| {
        use std::io::Write;
        let mut f = fs::OpenOptions::new().append(true).open(&log_path)?;
        f.write_all(train::log_line(rec, seed, &hash).as_bytes())?;
        Ok(())
    })?;
    save_checkpoint(&outcome.model, &dir.join("checkpoint.bin"), seed, &hash)?;
    let summary = TrainSummary {
        schema: 1,
        seed,
        config_hash: hash,
        algorithm: cfg.algorithm,
        task: outcome.task,
        test_loss: outcome.test_loss,
        test_metric: outcome.test_metric,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((outcome, summary))
}

pub fn cmd_toy(cfg: &ExperimentConfig) -> Result<toy::ToyOutcome> {
    let outcome = toy::run_toy(&cfg.toy, cfg.seed)?;
    let dir = out_dir(cfg)?;
    let tag = provenance(cfg);
    fs::write(dir.join("toy_curves.csv"), format!("# {tag}\n{}", outcome.comparison.to_csv()))?;
    let mut table = format!("# {tag}\nepsilon,worst_error\n");
    for r in &outcome.sweep {
        let _ = writeln!(table, "{},{}", r.epsilon, r.worst_error);
    }
    fs::write(dir.join("toy_convergence.csv"), table)?;
    Ok(outcome)
}

/// Writes the configured dataset as `train.csv`, `val.csv` and `test.csv`.
pub fn cmd_make_data(cfg: &ExperimentConfig) -> Result<DatasetSplits> {
    let splits = load_splits(cfg)?;
    let dir = out_dir(cfg)?;
    let tag = provenance(cfg);
    for (name, ds) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        fs::write(dir.join(format!("{name}.csv")), ds.to_csv(Some(&tag)))?;
    }
    Ok(splits)
}
