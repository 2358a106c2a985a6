//! Adam and the training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rhel_core::hssm::loss::{pooled_logits, Target};
use rhel_core::hssm::{Algorithm, BackwardOptions, Hssm, InitOptions};
use rhel_core::Precision;
use serde::Serialize;

use crate::config::{AdamConfig, ExperimentConfig, TaskKind};
use crate::data::{DatasetSplits, SequenceDataset};
use crate::error::{LabError, Result};

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        let c = &self.cfg;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grads[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Accuracy for classification, MSE for regression.
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Hssm,
    pub history: Vec<EpochRecord>,
    pub test_loss: f64,
    pub test_metric: f64,
    pub task: TaskKind,
}

/// Mean loss and gradient over a batch. The deterministic path reduces in
/// sample order; otherwise the reduction tree is left to the thread pool.
pub fn batch_gradient(
    model: &Hssm,
    batch: &[(&[Vec<f64>], &Target)],
    opts: &BackwardOptions,
    deterministic: bool,
) -> rhel_core::Result<(f64, Vec<f64>)> {
    if deterministic {
        return model.batch_gradient(batch, opts);
    }
    let scale = 1.0 / batch.len() as f64;
    let n = model.num_params();
    batch
        .par_iter()
        .map(|(x, t)| model.sample_gradient(x, t, opts, scale).map(|(l, _, g)| (l * scale, g)))
        .try_reduce(
            || (0.0, vec![0.0; n]),
            |(la, mut ga), (lb, gb)| {
                ga.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
                Ok((la + lb, ga))
            },
        )
}

/// (mean loss, metric) over a dataset.
pub fn evaluate(model: &Hssm, data: &SequenceDataset, precision: Precision) -> Result<(f64, f64)> {
    let rows: Vec<rhel_core::Result<(f64, f64)>> = data
        .all()
        .par_iter()
        .map(|(x, t)| {
            let (o, _) = model.forward(x, precision)?;
            let c = &model.config;
            let (loss, _) = rhel_core::hssm::loss::loss_and_grads(c.loss_kind, c.pooling, &o, t)?;
            let metric = match t {
                Target::Class(cls) => {
                    let logits = pooled_logits(&o, c.pooling);
                    let arg = logits
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                        .0;
                    f64::from(u8::from(arg == *cls))
                }
                Target::Sequence(_) => loss,
            };
            Ok((loss, metric))
        })
        .collect();
    let n = data.len().max(1) as f64;
    let (mut l, mut m) = (0.0, 0.0);
    for r in rows {
        let (a, b) = r?;
        l += a;
        m += b;
    }
    Ok((l / n, m / n))
}

pub fn init_model(cfg: &ExperimentConfig) -> Result<Hssm> {
    let spec = cfg.model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed());
    Ok(Hssm::init(
        &spec.hssm,
        &mut rng,
        InitOptions {
            random_nonlinear_readout: spec.random_nonlinear_readout,
        },
    )?)
}

pub fn check_compatible(model: &Hssm, data: &SequenceDataset) -> Result<()> {
    let c = &model.config;
    if data.feature_dim() != c.input_dim {
        return Err(LabError::Config(format!(
            "dataset has {} features, model.input_dim = {}",
            data.feature_dim(),
            c.input_dim
        )));
    }
    let want = match c.loss_kind {
        rhel_core::hssm::loss::LossKind::FinalStepCrossentropy => TaskKind::Classification,
        rhel_core::hssm::loss::LossKind::PerStepMse => TaskKind::Regression,
    };
    if data.task() != want {
        return Err(LabError::Config("loss_kind does not match dataset labels".into()));
    }
    Ok(())
}

/// Trains with the configured algorithm. `on_epoch` sees every record as
/// it is produced.
pub fn fit(
    cfg: &ExperimentConfig,
    splits: &DatasetSplits,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut model = init_model(cfg)?;
    check_compatible(&model, &splits.train)?;
    let prec = cfg.precision();
    let opts = cfg.backward_options(cfg.algorithm);
    let mut adam = Adam::new(cfg.optimizer.clone(), model.num_params());
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.train.epochs);
    let mut step = 0;
    for epoch in 0..cfg.train.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(cfg.train.batch_size) {
            let batch = splits.train.batch(idx);
            let (loss, grads) = batch_gradient(&model, &batch, &opts, cfg.deterministic)
                .map_err(|e| match e {
                    rhel_core::Error::NonFiniteState { .. } => LabError::AbortOnNaN { epoch, step },
                    other => other.into(),
                })?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(LabError::AbortOnNaN { epoch, step });
            }
            let mut p = model.flat_params();
            adam.step(&mut p, &grads);
            if p.iter().any(|x| !x.is_finite()) {
                return Err(LabError::AbortOnNaN { epoch, step });
            }
            model.set_flat_params(&p)?;
            model.project();
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
            step += 1;
        }
        let (val_loss, val_metric) = evaluate(&model, &splits.val, prec)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            val_metric,
        };
        if !rec.val_loss.is_finite() {
            return Err(LabError::AbortOnNaN { epoch, step });
        }
        on_epoch(&rec)?;
        history.push(rec);
    }
    let (test_loss, test_metric) = evaluate(&model, &splits.test, prec)?;
    Ok(TrainOutcome {
        task: splits.train.task(),
        model,
        history,
        test_loss,
        test_metric,
    })
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,val_metric,seed,config_hash";

pub fn log_line(rec: &EpochRecord, seed: u64, hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{},{},{},{},{seed},{hash}",
        rec.epoch, rec.train_loss, rec.val_loss, rec.val_metric
    );
    s
}

/// Paired run helper: same config and seed, different algorithm.
pub fn with_algorithm(cfg: &ExperimentConfig, algorithm: Algorithm) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        ..cfg.clone()
    }
}
