//! Sequence datasets: synthetic generators and a long-format CSV loader.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rhel_core::hssm::loss::Target;

use crate::config::{SyntheticTask, TaskKind};
use crate::error::{LabError, Result};

pub const COPY_DELAY: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub ids: Vec<String>,
    /// `[sample][step][feature]`.
    pub features: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: SequenceDataset,
    pub val: SequenceDataset,
    pub test: SequenceDataset,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().and_then(|f| f.first()).map_or(0, |r| r.len())
    }

    pub fn task(&self) -> TaskKind {
        match self.targets.first() {
            Some(Target::Sequence(_)) => TaskKind::Regression,
            _ => TaskKind::Classification,
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Vec<(&[Vec<f64>], &Target)> {
        idx.iter().map(|&i| (self.features[i].as_slice(), &self.targets[i])).collect()
    }

    pub fn all(&self) -> Vec<(&[Vec<f64>], &Target)> {
        self.features.iter().map(|f| f.as_slice()).zip(&self.targets).collect()
    }

    /// Long-format CSV: `sample_id,step,f0..f{d-1},label`. Lines starting
    /// with `#` are comments.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out.push_str("sample_id,step");
        for j in 0..self.feature_dim() {
            let _ = write!(out, ",f{j}");
        }
        out.push_str(",label\n");
        for ((id, f), t) in self.ids.iter().zip(&self.features).zip(&self.targets) {
            for (k, row) in f.iter().enumerate() {
                let _ = write!(out, "{id},{k}");
                for x in row {
                    let _ = write!(out, ",{x}");
                }
                match t {
                    Target::Class(c) => {
                        let _ = writeln!(out, ",{c}");
                    }
                    Target::Sequence(s) => {
                        let _ = writeln!(out, ",{}", s[k][0]);
                    }
                }
            }
        }
        out
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn freq2class(rng: &mut impl Rng, n: usize, k_len: usize) -> SequenceDataset {
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(rng);
    let features = labels
        .iter()
        .map(|&c| {
            let f = if c == 0 { 2.0 } else { 4.0 };
            let amp = rng.gen_range(0.5..1.5);
            let phase = rng.gen_range(0.0..TAU);
            (0..k_len)
                .map(|k| {
                    let t = k as f64 / k_len as f64;
                    vec![amp * (TAU * f * t + phase).sin() + 0.1 * normal(rng)]
                })
                .collect()
        })
        .collect();
    SequenceDataset {
        ids: (0..n).map(|i| i.to_string()).collect(),
        features,
        targets: labels.into_iter().map(Target::Class).collect(),
    }
}

fn delayed_copy(rng: &mut impl Rng, n: usize, k_len: usize) -> SequenceDataset {
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let rho: f64 = 0.9;
    for _ in 0..n {
        let mut x = normal(rng);
        let seq: Vec<Vec<f64>> = (0..k_len)
            .map(|_| {
                x = rho * x + (1.0 - rho * rho).sqrt() * normal(rng);
                vec![x, 0.5 * normal(rng)]
            })
            .collect();
        let tgt = (0..k_len)
            .map(|k| vec![if k >= COPY_DELAY { seq[k - COPY_DELAY][0] } else { 0.0 }])
            .collect();
        features.push(seq);
        targets.push(Target::Sequence(tgt));
    }
    SequenceDataset {
        ids: (0..n).map(|i| i.to_string()).collect(),
        features,
        targets,
    }
}

/// Generates a single dataset of `n` samples.
pub fn make_synthetic(task: SyntheticTask, n: usize, length: usize, seed: u64) -> SequenceDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task {
        SyntheticTask::Freq2class => freq2class(&mut rng, n, length),
        SyntheticTask::DelayedCopy => delayed_copy(&mut rng, n, length),
    }
}

/// Train/val/test draws with distinct derived seeds.
pub fn make_synthetic_splits(
    task: SyntheticTask,
    sizes: [usize; 3],
    length: usize,
    seed: u64,
) -> DatasetSplits {
    let s = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
    DatasetSplits {
        train: make_synthetic(task, sizes[0], length, s(1)),
        val: make_synthetic(task, sizes[1], length, s(2)),
        test: make_synthetic(task, sizes[2], length, s(3)),
    }
}

pub fn load_csv_dataset(path: &Path, task: Option<TaskKind>) -> Result<SequenceDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv_dataset(&text, task)
}

struct Rows {
    steps: Vec<(usize, Vec<f64>, f64, usize)>,
}

/// Parses the long-format schema. The label type is inferred unless given:
/// integer labels constant within every sample mean classification.
pub fn parse_csv_dataset(text: &str, task: Option<TaskKind>) -> Result<SequenceDataset> {
    let perr = |row: usize, msg: String| LabError::ParseError { row, msg };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let header_row = header.position().map_or(1, |p| p.line() as usize);
    if header.is_empty() {
        return Err(perr(header_row, "empty file".into()));
    }
    let names: Vec<&str> = header.iter().collect();
    let d = names.len().saturating_sub(3);
    let ok = names.len() >= 4
        && names[0] == "sample_id"
        && names[1] == "step"
        && names[names.len() - 1] == "label"
        && (0..d).all(|j| names[2 + j] == format!("f{j}"));
    if !ok {
        return Err(perr(header_row, "header must be sample_id,step,f0..f{d-1},label".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Rows> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            perr(row, e.to_string())
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i].parse().map_err(|_| perr(row, format!("column {} is not a number: {:?}", names[i], &rec[i])))?;
            if !v.is_finite() {
                return Err(perr(row, format!("column {} is not finite", names[i])));
            }
            Ok(v)
        };
        let id = rec[0].to_string();
        let step: usize = rec[1].parse().map_err(|_| perr(row, format!("step is not a non-negative integer: {:?}", &rec[1])))?;
        let feats = (0..d).map(|j| num(2 + j)).collect::<Result<Vec<f64>>>()?;
        let label = num(2 + d)?;
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Rows { steps: Vec::new() }
            })
            .steps
            .push((step, feats, label, row));
    }
    if order.is_empty() {
        return Err(perr(header_row + 1, "no data rows".into()));
    }
    let mut expected: Option<usize> = None;
    let mut features = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    for id in &order {
        let mut g = groups.remove(id).expect("grouped");
        g.steps.sort_by_key(|s| s.0);
        let last_row = g.steps.iter().map(|s| s.3).max().unwrap_or(0);
        for (k, s) in g.steps.iter().enumerate() {
            if s.0 != k {
                return Err(perr(s.3, format!("sample {id}: steps must be 0..K-1 without gaps or repeats")));
            }
        }
        let len = g.steps.len();
        match expected {
            None => expected = Some(len),
            Some(e) if e != len => {
                return Err(LabError::RaggedSequence {
                    sample_id: id.clone(),
                    expected: e,
                    got: len,
                    row: last_row,
                })
            }
            _ => {}
        }
        labels.push(g.steps.iter().map(|s| (s.2, s.3)).collect::<Vec<_>>());
        features.push(g.steps.into_iter().map(|s| s.1).collect::<Vec<_>>());
    }
    let is_class = |l: &[(f64, usize)]| {
        l.iter().all(|&(v, _)| v >= 0.0 && v.fract() == 0.0) && l.iter().all(|&(v, _)| v == l[0].0)
    };
    let task = task.unwrap_or(if labels.iter().all(|l| is_class(l)) {
        TaskKind::Classification
    } else {
        TaskKind::Regression
    });
    let targets = labels
        .iter()
        .map(|l| match task {
            TaskKind::Classification => {
                if !is_class(l) {
                    let row = l.iter().find(|&&(v, _)| v != l[0].0 || v < 0.0 || v.fract() != 0.0).map_or(0, |x| x.1);
                    return Err(perr(row, "class labels must be one non-negative integer per sample".into()));
                }
                Ok(Target::Class(l[0].0 as usize))
            }
            TaskKind::Regression => Ok(Target::Sequence(l.iter().map(|&(v, _)| vec![v]).collect())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceDataset {
        ids: order,
        features,
        targets,
    })
}
