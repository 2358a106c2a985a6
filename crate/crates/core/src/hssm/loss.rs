use serde::{Deserialize, Serialize};

use crate::certify::{check_close, fd_gradient};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    FinalStepCrossentropy,
    PerStepMse,
}

/// How step outputs are reduced to logits for classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Last,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Sequence(Vec<Vec<f64>>),
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Pooled logits used for classification.
pub fn pooled_logits(outputs: &[Vec<f64>], pooling: Pooling) -> Vec<f64> {
    match pooling {
        Pooling::Last => outputs.last().cloned().unwrap_or_default(),
        Pooling::Mean => {
            let k = outputs.len() as f64;
            let mut acc = vec![0.0; outputs.first().map_or(0, |o| o.len())];
            for o in outputs {
                for (a, x) in acc.iter_mut().zip(o) {
                    *a += x / k;
                }
            }
            acc
        }
    }
}

/// Scalar loss and its gradient with respect to every step output.
pub fn loss_and_grads(
    kind: LossKind,
    pooling: Pooling,
    outputs: &[Vec<f64>],
    target: &Target,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let k_total = outputs.len();
    if k_total == 0 {
        return Err(Error::InvalidParameter("empty output sequence".into()));
    }
    let d = outputs[0].len();
    let mut grads = vec![vec![0.0; d]; k_total];
    match (kind, target) {
        (LossKind::FinalStepCrossentropy, Target::Class(c)) => {
            if *c >= d {
                return Err(Error::InvalidParameter(format!("class {c} out of range {d}")));
            }
            let logits = pooled_logits(outputs, pooling);
            let p = softmax(&logits);
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
            let loss = lse - logits[*c];
            let mut g = p;
            g[*c] -= 1.0;
            match pooling {
                Pooling::Last => grads[k_total - 1] = g,
                Pooling::Mean => {
                    for row in grads.iter_mut() {
                        for (r, gi) in row.iter_mut().zip(&g) {
                            *r = gi / k_total as f64;
                        }
                    }
                }
            }
            Ok((loss, grads))
        }
        (LossKind::PerStepMse, Target::Sequence(t)) => {
            check_len("mse target length", k_total, t.len())?;
            let norm = (k_total * d) as f64;
            let mut loss = 0.0;
            for k in 0..k_total {
                check_len("mse target width", d, t[k].len())?;
                for j in 0..d {
                    let e = outputs[k][j] - t[k][j];
                    loss += e * e / norm;
                    grads[k][j] = 2.0 * e / norm;
                }
            }
            Ok((loss, grads))
        }
        _ => Err(Error::InvalidParameter(
            "loss kind does not match target type".into(),
        )),
    }
}

/// Randomized finite-difference check of both losses and both poolings.
pub fn certify(seed: u64, trials: usize) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let k_total = rng.gen_range(1..5);
        let d = rng.gen_range(2..5);
        let outputs: Vec<f64> = (0..k_total * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let seq: Vec<Vec<f64>> = (0..k_total)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let cases = [
            (LossKind::FinalStepCrossentropy, Pooling::Last, Target::Class(rng.gen_range(0..d))),
            (LossKind::FinalStepCrossentropy, Pooling::Mean, Target::Class(rng.gen_range(0..d))),
            (LossKind::PerStepMse, Pooling::Last, Target::Sequence(seq)),
        ];
        for (kind, pooling, target) in cases.iter() {
            let eval = |q: &[f64]| {
                let outs: Vec<Vec<f64>> = q.chunks(d).map(|c| c.to_vec()).collect();
                loss_and_grads(*kind, *pooling, &outs, target).map_or(f64::NAN, |r| r.0)
            };
            let outs: Vec<Vec<f64>> = outputs.chunks(d).map(|c| c.to_vec()).collect();
            let (_, g) = loss_and_grads(*kind, *pooling, &outs, target)?;
            let fd = fd_gradient(&outputs, eval);
            check_close("loss gradient", &g.concat(), &fd, 1e-6)?;
        }
    }
    Ok(())
}
