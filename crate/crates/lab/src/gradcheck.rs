//! Static comparison of two backward algorithms on one batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rhel_core::baselines::{compare_gradients, Comparison};
use rhel_core::hssm::loss::loss_and_grads;
use rhel_core::hssm::{Algorithm, BackwardOptions, Hssm};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::SequenceDataset;
use crate::error::{LabError, Result};
use crate::train::init_model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub block: Option<usize>,
    pub cosine: f64,
    pub norm_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block: usize,
    pub tensors: Vec<TensorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub cosine: f64,
    pub norm_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputGradReport {
    pub block: usize,
    pub steps: Vec<StepReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub reference: Algorithm,
    pub precision: u32,
    pub epsilon: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Encoder and decoder tensors.
    pub global: Vec<TensorReport>,
    pub blocks: Vec<BlockReport>,
    pub input_gradients: InputGradReport,
    /// Unweighted mean over all tensors.
    pub mean_cosine: f64,
}

impl GradcheckReport {
    pub fn tensors(&self) -> impl Iterator<Item = &TensorReport> {
        self.global.iter().chain(self.blocks.iter().flat_map(|b| &b.tensors))
    }

    pub fn min_cosine(&self) -> f64 {
        self.tensors().map(|t| t.cosine).fold(f64::INFINITY, f64::min)
    }
}

struct BatchGrads {
    params: Vec<f64>,
    /// `[sample][step][hidden]` for the chosen block.
    inputs: Vec<Vec<Vec<f64>>>,
}

fn batch_grads(
    model: &Hssm,
    batch: &[(&[Vec<f64>], &rhel_core::hssm::loss::Target)],
    opts: &BackwardOptions,
    block: usize,
) -> Result<BatchGrads> {
    let scale = 1.0 / batch.len() as f64;
    let c = &model.config;
    let per: Vec<rhel_core::Result<(Vec<f64>, Vec<Vec<f64>>)>> = batch
        .par_iter()
        .map(|(x, t)| {
            let (o, cache) = model.forward(x, opts.precision)?;
            let (_, mut lg) = loss_and_grads(c.loss_kind, c.pooling, &o, t)?;
            lg.iter_mut().flatten().for_each(|g| *g *= scale);
            let (g, mut ins) = model.backward_traced(&cache, &lg, opts)?;
            Ok((g, std::mem::take(&mut ins[block])))
        })
        .collect();
    let mut params = vec![0.0; model.num_params()];
    let mut inputs = Vec::with_capacity(batch.len());
    for p in per {
        let (g, ins) = p.map_err(|e| LabError::NanGradient(format!("{:?}: {e}", opts.algorithm)))?;
        params.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        inputs.push(ins);
    }
    if params.iter().chain(inputs.iter().flatten().flatten()).any(|x| !x.is_finite()) {
        return Err(LabError::NanGradient(format!("{:?}", opts.algorithm)));
    }
    Ok(BatchGrads { params, inputs })
}

fn tensor_report(name: &str, block: Option<usize>, c: Comparison) -> TensorReport {
    TensorReport {
        name: name.to_string(),
        block,
        cosine: c.cosine,
        norm_ratio: c.norm_ratio,
    }
}

/// Runs both algorithms on the same batch and compares them tensor by
/// tensor, plus step by step on one block's input gradients.
pub fn gradcheck_report(cfg: &ExperimentConfig, data: &SequenceDataset) -> Result<GradcheckReport> {
    let model = init_model(cfg)?;
    crate::train::check_compatible(&model, data)?;
    let bs = cfg.gradcheck.batch_size.min(data.len());
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    idx.truncate(bs);
    let batch = data.batch(&idx);
    let block = cfg.gradcheck.input_block;
    let a = batch_grads(&model, &batch, &cfg.backward_options(cfg.algorithm), block)?;
    let b = batch_grads(&model, &batch, &cfg.backward_options(cfg.reference), block)?;
    let mut global = Vec::new();
    let mut blocks: Vec<BlockReport> = (0..model.blocks.len())
        .map(|l| BlockReport {
            block: l,
            tensors: Vec::new(),
        })
        .collect();
    for spec in model.layout() {
        let r = spec.range();
        let rep = tensor_report(&spec.name, spec.block, compare_gradients(&a.params[r.clone()], &b.params[r]));
        match spec.block {
            Some(l) => blocks[l].tensors.push(rep),
            None => global.push(rep),
        }
    }
    let k_len = a.inputs.first().map_or(0, |s| s.len());
    let steps = (0..k_len)
        .map(|k| {
            let va: Vec<f64> = a.inputs.iter().flat_map(|s| s[k].iter().copied()).collect();
            let vb: Vec<f64> = b.inputs.iter().flat_map(|s| s[k].iter().copied()).collect();
            let c = compare_gradients(&va, &vb);
            StepReport {
                step: k,
                cosine: c.cosine,
                norm_ratio: c.norm_ratio,
            }
        })
        .collect();
    let mut report = GradcheckReport {
        schema: 1,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        algorithm: cfg.algorithm,
        reference: cfg.reference,
        precision: cfg.precision,
        epsilon: cfg.epsilon,
        gamma: cfg.gamma,
        batch_size: bs,
        global,
        blocks,
        input_gradients: InputGradReport { block, steps },
        mean_cosine: 0.0,
    };
    let (sum, n) = report.tensors().fold((0.0, 0usize), |(s, n), t| (s + t.cosine, n + 1));
    report.mean_cosine = sum / n.max(1) as f64;
    Ok(report)
}
