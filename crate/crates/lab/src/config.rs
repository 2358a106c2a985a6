//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use rhel_core::hssm::{Algorithm, BackwardOptions, HssmConfig};
use rhel_core::Precision;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Comparator used by `gradcheck`.
    #[serde(default = "default_reference")]
    pub reference: Algorithm,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// 32 or 64.
    #[serde(default = "default_precision")]
    pub precision: u32,
    #[serde(default)]
    pub deterministic: bool,
    /// Required by every command except `toy`.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Required by every command except `toy`.
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default)]
    pub toy: ToyConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub hssm: HssmConfig,
    /// Seed for weight initialisation; the experiment seed when absent.
    #[serde(default)]
    pub init_seed: Option<u64>,
    #[serde(default)]
    pub random_nonlinear_readout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "adam_eps")]
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    Freq2class,
    DelayedCopy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic {
        task: SyntheticTask,
        #[serde(default = "n_train")]
        n_train: usize,
        #[serde(default = "n_eval")]
        n_val: usize,
        #[serde(default = "n_eval")]
        n_test: usize,
        /// Sequence length; 256 unless overridden.
        #[serde(default = "seq_len")]
        length: usize,
    },
    Csv {
        train: PathBuf,
        val: PathBuf,
        test: PathBuf,
        /// Overrides label-type inference.
        #[serde(default)]
        task: Option<TaskKind>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub batch_size: usize,
    /// Block whose input gradients are compared step by step.
    pub input_block: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            input_block: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub t_end: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub loss_scale: f64,
    /// ε values for the convergence table.
    pub sweep: Vec<f64>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt: 1e-3,
            epsilon: 1e-3,
            loss_scale: 1.0,
            sweep: vec![1e-2, 5e-3, 2.5e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Rhel
}
fn default_reference() -> Algorithm {
    Algorithm::Bptt
}
fn default_epsilon() -> f64 {
    1e-4
}
fn one() -> f64 {
    1.0
}
fn default_precision() -> u32 {
    64
}
fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}
fn n_train() -> usize {
    512
}
fn n_eval() -> usize {
    128
}
fn seq_len() -> usize {
    256
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config. Relative CSV paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(DataSpec::Csv { train, val, test, .. }) = &mut cfg.data {
            for p in [train, val, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        if let Some(m) = &self.model {
            m.hssm.validate()?;
            if self.gradcheck.input_block >= m.hssm.n_blocks {
                return bad("gradcheck.input_block out of range");
            }
        }
        if Precision::from_bits(self.precision).is_none() {
            return bad("precision must be 32 or 64");
        }
        if self.epsilon == 0.0 || !self.epsilon.is_finite() {
            return bad("epsilon must be finite and non-zero");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return bad("optimizer needs lr ≥ 0, β in [0, 1), eps > 0");
        }
        if self.train.batch_size == 0 || self.gradcheck.batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        let t = &self.toy;
        if !(t.dt > 0.0 && t.t_end > 0.0 && t.epsilon > 0.0) || t.sweep.iter().any(|e| !(*e > 0.0)) {
            return bad("toy needs dt, t_end, epsilon and sweep values > 0");
        }
        match &self.data {
            None => {}
            Some(DataSpec::Synthetic { n_train, length, .. }) => {
                if *n_train == 0 || *length < 2 {
                    return bad("synthetic data needs n_train > 0 and length ≥ 2");
                }
            }
            Some(DataSpec::Csv { train, val, test, .. }) => {
                for p in [train, val, test] {
                    if !p.is_file() {
                        return Err(LabError::MissingFile(p.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn precision(&self) -> Precision {
        Precision::from_bits(self.precision).unwrap_or_default()
    }

    pub fn model(&self) -> Result<&ModelSpec> {
        self.model.as_ref().ok_or_else(|| LabError::Config("missing [model] section".into()))
    }

    pub fn data(&self) -> Result<&DataSpec> {
        self.data.as_ref().ok_or_else(|| LabError::Config("missing [data] section".into()))
    }

    pub fn init_seed(&self) -> u64 {
        self.model.as_ref().and_then(|m| m.init_seed).unwrap_or(self.seed)
    }

    pub fn backward_options(&self, algorithm: Algorithm) -> BackwardOptions {
        BackwardOptions {
            algorithm,
            epsilon: self.epsilon,
            gamma: self.gamma,
            precision: self.precision(),
        }
    }

    /// SHA-256 of the canonical JSON serialisation, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
