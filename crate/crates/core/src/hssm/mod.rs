//! Stacked Hamiltonian sequence model: encoder, HRU blocks with spatial glue,
//! decoder, and gradients by echo learning or by backpropagation.

pub mod checkpoint;
pub mod loss;
pub mod spatial;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loss::{loss_and_grads, pooled_logits, LossKind, Pooling, Target};
pub use spatial::{SpatialBlock, SpatialStep};

use crate::baselines::bptt_gradients;
use crate::error::{check_len, Error, Result};
use crate::integrator::{rollout, SeparableHamiltonian, Trajectory};
use crate::linalg::{matvec, matvec_t_acc, outer_acc};
use crate::linear::{parallel_scan_rollout, scan_elements, LinearHru, ScanDirection};
use crate::nonlinear::NonlinearHru;
use crate::phase::PhaseState;
use crate::precision::Precision;
use crate::rhel::{hru_echo_pair, reversed, rhel_gradients, EchoPair, NudgeSequence};

pub const PARAM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rhel,
    Bptt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HssmConfig {
    pub n_blocks: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dim: usize,
    pub state_dim: usize,
    pub block_kind: BlockKind,
    #[serde(default)]
    pub include_time: bool,
    pub loss_kind: LossKind,
    #[serde(default)]
    pub pooling: Pooling,
}

impl HssmConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_blocks,
            self.input_dim,
            self.output_dim,
            self.hidden_dim,
            self.state_dim,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(
                "n_blocks and all dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Encoder input width including the optional time feature.
    pub fn encoder_input_dim(&self) -> usize {
        self.input_dim + usize::from(self.include_time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hru {
    Linear(LinearHru),
    Nonlinear(NonlinearHru),
}

impl Hru {
    pub fn as_hamiltonian(&self) -> &dyn SeparableHamiltonian {
        match self {
            Hru::Linear(h) => h,
            Hru::Nonlinear(h) => h,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Hru::Linear(h) => h.params_mut(),
            Hru::Nonlinear(h) => h.params_mut(),
        }
    }

    /// Named tensors as (name, shape, range into the flat parameter vector).
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, std::ops::Range<usize>)> {
        match self {
            Hru::Linear(h) => {
                let (n, m) = (h.dim_n(), h.dim_m());
                vec![
                    ("A", vec![n], h.a_range()),
                    ("B", vec![n, m], h.b_range()),
                    ("delta", vec![n], h.delta_range()),
                ]
            }
            Hru::Nonlinear(h) => {
                let (n, m) = (h.dim_n(), h.dim_m());
                let ia = h.alpha_index();
                vec![
                    ("A", vec![n], h.a_range()),
                    ("B", vec![n, m], h.b_range()),
                    ("b", vec![n], h.bias_range()),
                    ("alpha", vec![1], ia..ia + 1),
                    ("delta_raw", vec![n], h.delta_range()),
                ]
            }
        }
    }

    pub fn project(&mut self) {
        match self {
            Hru::Linear(h) => h.project(PARAM_FLOOR),
            Hru::Nonlinear(h) => h.project(PARAM_FLOOR),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub hru: Hru,
    pub spatial: SpatialBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hssm {
    pub config: HssmConfig,
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    pub blocks: Vec<Block>,
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub block: Option<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    /// Initialize the nonlinear readout C at random instead of zero.
    pub random_nonlinear_readout: bool,
}

/// Gradient settings shared by both backward paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardOptions {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub gamma: f64,
    pub precision: Precision,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Rhel,
            epsilon: 0.1,
            gamma: 1.0,
            precision: Precision::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCache {
    pub inputs: Vec<Vec<f64>>,
    pub traj: Trajectory,
    pub steps: Vec<SpatialStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub enc_inputs: Vec<Vec<f64>>,
    pub blocks: Vec<BlockCache>,
    pub top: Vec<Vec<f64>>,
    pub precision: Precision,
}

fn uniform(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

fn normal(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn fan_in_uniform(rng: &mut impl Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    uniform(rng, len, -bound, bound)
}

impl Hssm {
    /// Random initialization. HRU and readout tensors follow the published
    /// schemes; encoder, decoder and GLU weights use U(±1/√fan_in).
    pub fn init(config: &HssmConfig, rng: &mut impl Rng, opts: InitOptions) -> Result<Self> {
        config.validate()?;
        let (h, s, din, dout) = (
            config.hidden_dim,
            config.state_dim,
            config.encoder_input_dim(),
            config.output_dim,
        );
        let enc_w = fan_in_uniform(rng, h * din, din);
        let enc_b = fan_in_uniform(rng, h, din);
        let mut blocks = Vec::with_capacity(config.n_blocks);
        let bb = 1.0 / h as f64;
        for _ in 0..config.n_blocks {
            let (hru, c) = match config.block_kind {
                BlockKind::Linear => {
                    let a: Vec<f64> = uniform(rng, s, 0.0, 1.0).iter().map(|x| x.max(PARAM_FLOOR)).collect();
                    let b = uniform(rng, s * h, -bb, bb);
                    let d: Vec<f64> = uniform(rng, s, 0.0, 1.0).iter().map(|x| x.max(PARAM_FLOOR)).collect();
                    let c = uniform(rng, h * s, -1.0 / s as f64, 1.0 / s as f64);
                    (Hru::Linear(LinearHru::new(&a, &b, &d, h)?), c)
                }
                BlockKind::Nonlinear => {
                    let a = uniform(rng, s, 0.5, 1.0);
                    let b = uniform(rng, s * h, -bb, bb);
                    let bias = normal(rng, s);
                    let alpha = rng.gen_range(0.1..1.0);
                    let rd = uniform(rng, s, -1.0, 1.0);
                    let c = if opts.random_nonlinear_readout {
                        uniform(rng, h * s, -1.0 / s as f64, 1.0 / s as f64)
                    } else {
                        vec![0.0; h * s]
                    };
                    (Hru::Nonlinear(NonlinearHru::new(&a, &b, &bias, alpha, &rd, h)?), c)
                }
            };
            let d = normal(rng, h);
            let w1 = fan_in_uniform(rng, h * h, h);
            let w2 = fan_in_uniform(rng, h * h, h);
            blocks.push(Block {
                hru,
                spatial: SpatialBlock {
                    hidden: h,
                    state: s,
                    c,
                    d,
                    w1,
                    w2,
                },
            });
        }
        let dec_w = fan_in_uniform(rng, dout * h, h);
        let dec_b = fan_in_uniform(rng, dout, h);
        Ok(Self {
            config: config.clone(),
            enc_w,
            enc_b,
            blocks,
            dec_w,
            dec_b,
        })
    }

    /// Parameter tensors in flat order.
    pub fn layout(&self) -> Vec<TensorSpec> {
        let c = &self.config;
        let (h, s, din, dout) = (c.hidden_dim, c.state_dim, c.encoder_input_dim(), c.output_dim);
        let mut out = Vec::new();
        let mut off = 0;
        let mut push = |name: String, shape: Vec<usize>, block: Option<usize>, off: &mut usize| {
            let t = TensorSpec {
                name,
                shape,
                offset: *off,
                block,
            };
            *off += t.len();
            out.push(t);
        };
        push("encoder.weight".into(), vec![h, din], None, &mut off);
        push("encoder.bias".into(), vec![h], None, &mut off);
        for (l, b) in self.blocks.iter().enumerate() {
            for (name, shape, _) in b.hru.tensors() {
                push(format!("block.{l}.hru.{name}"), shape, Some(l), &mut off);
            }
            push(format!("block.{l}.C"), vec![h, s], Some(l), &mut off);
            push(format!("block.{l}.D"), vec![h], Some(l), &mut off);
            push(format!("block.{l}.glu.W1"), vec![h, h], Some(l), &mut off);
            push(format!("block.{l}.glu.W2"), vec![h, h], Some(l), &mut off);
        }
        push("decoder.weight".into(), vec![dout, h], None, &mut off);
        push("decoder.bias".into(), vec![dout], None, &mut off);
        out
    }

    pub fn num_params(&self) -> usize {
        self.layout().last().map_or(0, |t| t.offset + t.len())
    }

    fn block_offset(&self, l: usize) -> usize {
        let c = &self.config;
        let mut off = c.hidden_dim * c.encoder_input_dim() + c.hidden_dim;
        for b in &self.blocks[..l] {
            off += b.hru.as_hamiltonian().num_params() + block_spatial_len(c);
        }
        off
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.enc_w);
        v.extend_from_slice(&self.enc_b);
        for b in &self.blocks {
            v.extend_from_slice(b.hru.as_hamiltonian().params());
            v.extend_from_slice(&b.spatial.c);
            v.extend_from_slice(&b.spatial.d);
            v.extend_from_slice(&b.spatial.w1);
            v.extend_from_slice(&b.spatial.w2);
        }
        v.extend_from_slice(&self.dec_w);
        v.extend_from_slice(&self.dec_b);
        v
    }

    /// Writes a flat parameter vector back without projection.
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat parameters", self.num_params(), flat.len())?;
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (a, b) = rest.split_at(dst.len());
            dst.copy_from_slice(a);
            rest = b;
        };
        take(&mut self.enc_w);
        take(&mut self.enc_b);
        for b in &mut self.blocks {
            take(b.hru.params_mut());
            take(&mut b.spatial.c);
            take(&mut b.spatial.d);
            take(&mut b.spatial.w1);
            take(&mut b.spatial.w2);
        }
        take(&mut self.dec_w);
        take(&mut self.dec_b);
        Ok(())
    }

    /// Restores the HRU parameter constraints after an update.
    pub fn project(&mut self) {
        for b in &mut self.blocks {
            b.hru.project();
        }
    }

    /// Appends the normalized time feature when configured.
    pub fn prepare_inputs(&self, raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if !self.config.include_time {
            return raw.to_vec();
        }
        let k_total = raw.len();
        raw.iter()
            .enumerate()
            .map(|(k, u)| {
                let mut v = u.clone();
                v.push(if k_total > 1 {
                    k as f64 / (k_total - 1) as f64
                } else {
                    0.0
                });
                v
            })
            .collect()
    }

    pub fn forward(&self, raw_inputs: &[Vec<f64>], precision: Precision) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
        let c = &self.config;
        if raw_inputs.is_empty() {
            return Err(Error::InvalidParameter("input sequence must be non-empty".into()));
        }
        for u in raw_inputs {
            check_len("model input", c.input_dim, u.len())?;
        }
        let enc_inputs = self.prepare_inputs(raw_inputs);
        let (h, din) = (c.hidden_dim, c.encoder_input_dim());
        let mut cur: Vec<Vec<f64>> = enc_inputs
            .iter()
            .map(|u| {
                let mut y = vec![0.0; h];
                matvec(&self.enc_w, h, din, u, &mut y);
                for (yi, bi) in y.iter_mut().zip(&self.enc_b) {
                    *yi += bi;
                }
                precision.round_slice(&mut y);
                y
            })
            .collect();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let traj = hru_forward(&b.hru, &cur, precision)?;
            let mut next = Vec::with_capacity(cur.len());
            let mut steps = Vec::with_capacity(cur.len());
            for (k, u) in cur.iter().enumerate() {
                let (o, st) = b.spatial.forward_step(u, traj.state(k + 1).phi(), precision);
                next.push(o);
                steps.push(st);
            }
            blocks.push(BlockCache {
                inputs: std::mem::replace(&mut cur, next),
                traj,
                steps,
            });
        }
        let dout = c.output_dim;
        let outputs = cur
            .iter()
            .map(|x| {
                let mut y = vec![0.0; dout];
                matvec(&self.dec_w, dout, h, x, &mut y);
                for (yi, bi) in y.iter_mut().zip(&self.dec_b) {
                    *yi += bi;
                }
                precision.round_slice(&mut y);
                y
            })
            .collect();
        Ok((
            outputs,
            ForwardCache {
                enc_inputs,
                blocks,
                top: cur,
                precision,
            },
        ))
    }

    /// Gradient of the loss with respect to all parameters, given the loss
    /// gradient on every output step.
    pub fn backward(&self, cache: &ForwardCache, loss_grads: &[Vec<f64>], opts: &BackwardOptions) -> Result<Vec<f64>> {
        Ok(self.backward_traced(cache, loss_grads, opts)?.0)
    }

    /// Like [`Hssm::backward`], also returning the loss gradient with respect
    /// to each block's input sequence (`[block][step][hidden]`).
    pub fn backward_traced(
        &self,
        cache: &ForwardCache,
        loss_grads: &[Vec<f64>],
        opts: &BackwardOptions,
    ) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
        let c = &self.config;
        let (h, din, dout) = (c.hidden_dim, c.encoder_input_dim(), c.output_dim);
        let prec = opts.precision;
        let k_total = cache.top.len();
        check_len("loss gradient steps", k_total, loss_grads.len())?;
        if opts.algorithm == Algorithm::Rhel && opts.epsilon == 0.0 {
            return Err(Error::EpsilonZero);
        }
        let mut grads = vec![0.0; self.num_params()];
        let n_total = grads.len();
        let dec_off = n_total - dout * h - dout;
        let mut upstream = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let g = &loss_grads[k];
            check_len("loss gradient width", dout, g.len())?;
            outer_acc(&mut grads[dec_off..dec_off + dout * h], g, &cache.top[k], 1.0);
            for j in 0..dout {
                grads[dec_off + dout * h + j] += g[j];
            }
            let mut d = vec![0.0; h];
            matvec_t_acc(&self.dec_w, dout, h, g, 1.0, &mut d);
            prec.round_slice(&mut d);
            upstream.push(d);
        }
        let mut block_input_grads = vec![Vec::new(); self.blocks.len()];
        for l in (0..self.blocks.len()).rev() {
            let b = &self.blocks[l];
            let bc = &cache.blocks[l];
            let phis: Vec<&[f64]> = (1..=k_total).map(|k| bc.traj.state(k).phi()).collect();
            let sg = b.spatial.vjp(&bc.inputs, &phis, &bc.steps, &upstream, prec);
            let n = c.state_dim;
            let mut nudges = NudgeSequence::zeros(k_total, n).with_gamma(opts.gamma);
            for k in 0..k_total {
                nudges.grads[k + 1][..n].copy_from_slice(&sg.d_phi[k]);
            }
            let (d_theta, d_u) = hru_backward(&b.hru, &bc.traj, &nudges, opts)?;
            let off = self.block_offset(l);
            let np = d_theta.len();
            for (g, d) in grads[off..off + np].iter_mut().zip(&d_theta) {
                *g += d;
            }
            let mut o = off + np;
            for part in [&sg.d_c, &sg.d_d, &sg.d_w1, &sg.d_w2] {
                for (g, d) in grads[o..o + part.len()].iter_mut().zip(part.iter()) {
                    *g += d;
                }
                o += part.len();
            }
            upstream = sg.d_input;
            for (up, du) in upstream.iter_mut().zip(&d_u) {
                for (a, b) in up.iter_mut().zip(du) {
                    *a += b;
                }
                prec.round_slice(up);
            }
            block_input_grads[l] = upstream.clone();
        }
        for k in 0..k_total {
            outer_acc(&mut grads[..h * din], &upstream[k], &cache.enc_inputs[k], 1.0);
            for j in 0..h {
                grads[h * din + j] += upstream[k][j];
            }
        }
        prec.round_slice(&mut grads);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteState {
                step: 0,
                substep: "gradient",
            });
        }
        Ok((grads, block_input_grads))
    }

    /// Loss, outputs and parameter gradient for one sequence.
    pub fn sample_gradient(
        &self,
        raw_inputs: &[Vec<f64>],
        target: &Target,
        opts: &BackwardOptions,
        loss_scale: f64,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
        let (outputs, cache) = self.forward(raw_inputs, opts.precision)?;
        let (loss, mut lg) = loss_and_grads(self.config.loss_kind, self.config.pooling, &outputs, target)?;
        for row in lg.iter_mut() {
            for x in row.iter_mut() {
                *x *= loss_scale;
            }
        }
        let g = self.backward(&cache, &lg, opts)?;
        Ok((loss, outputs, g))
    }

    /// Mean loss and mean gradient over a batch. Per-sample work runs in
    /// parallel; the reduction is in sample order.
    pub fn batch_gradient(
        &self,
        batch: &[(&[Vec<f64>], &Target)],
        opts: &BackwardOptions,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let parts: Vec<Result<(f64, Vec<Vec<f64>>, Vec<f64>)>> = batch
            .par_iter()
            .map(|(x, t)| self.sample_gradient(x, t, opts, scale))
            .collect();
        let mut total = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        for p in parts {
            let (l, _, g) = p?;
            loss += l * scale;
            for (a, b) in total.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((loss, total))
    }

    /// Mean loss over a batch without gradients.
    pub fn batch_loss(&self, batch: &[(&[Vec<f64>], &Target)], precision: Precision) -> Result<f64> {
        let parts: Vec<Result<f64>> = batch
            .par_iter()
            .map(|(x, t)| {
                let (o, _) = self.forward(x, precision)?;
                Ok(loss_and_grads(self.config.loss_kind, self.config.pooling, &o, t)?.0)
            })
            .collect();
        let mut loss = 0.0;
        for p in parts {
            loss += p?;
        }
        Ok(loss / batch.len().max(1) as f64)
    }
}

fn block_spatial_len(c: &HssmConfig) -> usize {
    let h = c.hidden_dim;
    h * c.state_dim + h + 2 * h * h
}

/// Rollout of one HRU from the zero state. Linear blocks use the scan in
/// double precision; everything else is integrated step by step.
pub fn hru_forward(hru: &Hru, inputs: &[Vec<f64>], precision: Precision) -> Result<Trajectory> {
    let n = hru.as_hamiltonian().dim();
    let x0 = PhaseState::zeros(n);
    match (hru, precision) {
        (Hru::Linear(lin), Precision::F64) => {
            let els = scan_elements(lin, inputs, None, 0.0, ScanDirection::Forward)?;
            let traj = parallel_scan_rollout(lin, &els, &x0, inputs)?;
            if !traj.final_state().is_finite() {
                return Err(Error::NonFiniteState {
                    step: inputs.len().saturating_sub(1),
                    substep: "scan",
                });
            }
            Ok(traj)
        }
        _ => rollout(hru.as_hamiltonian(), &x0, inputs, 1.0, precision),
    }
}

fn linear_echo_pair(
    lin: &LinearHru,
    traj: &Trajectory,
    nudges: &NudgeSequence,
    epsilon: f64,
) -> Result<EchoPair> {
    let k_total = traj.len();
    let rev = reversed(&traj.inputs);
    let run = |dir: ScanDirection, sign: f64| -> Result<Trajectory> {
        let mut x0 = traj.final_state().conjugate();
        x0.add_swapped(sign * epsilon * nudges.gamma, &nudges.grads[k_total]);
        let els = scan_elements(lin, &traj.inputs, Some(nudges), epsilon, dir)?;
        parallel_scan_rollout(lin, &els, &x0, &rev)
    };
    let (plus, minus) = rayon::join(
        || run(ScanDirection::EchoPlus, 1.0),
        || run(ScanDirection::EchoMinus, -1.0),
    );
    Ok(EchoPair {
        plus: plus?,
        minus: minus?,
        epsilon,
        gamma: nudges.gamma,
        precision: Precision::F64,
    })
}

/// (Δθ, Δu) of one HRU for the given state nudges, by the configured algorithm.
pub fn hru_backward(
    hru: &Hru,
    traj: &Trajectory,
    nudges: &NudgeSequence,
    opts: &BackwardOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let h = hru.as_hamiltonian();
    match opts.algorithm {
        Algorithm::Bptt => {
            let g = bptt_gradients(h, traj, nudges, opts.precision)?;
            Ok((g.d_theta, g.d_inputs))
        }
        Algorithm::Rhel => {
            let rev = reversed(&traj.inputs);
            let pair = match (hru, opts.precision) {
                (Hru::Linear(lin), Precision::F64) => linear_echo_pair(lin, traj, nudges, opts.epsilon)?,
                _ => hru_echo_pair(
                    h,
                    traj.final_state(),
                    nudges,
                    &rev,
                    opts.epsilon,
                    traj.step,
                    opts.precision,
                )?,
            };
            let g = rhel_gradients(&pair, h, &rev)?;
            Ok((g.d_theta, g.d_inputs))
        }
    }
}

/// Runs every finite-difference certification gate.
pub fn certify_all(seed: u64) -> Result<()> {
    crate::linear::certify(seed, 100)?;
    crate::nonlinear::certify(seed.wrapping_add(1), 100)?;
    spatial::certify(seed.wrapping_add(2), 100)?;
    loss::certify(seed.wrapping_add(3), 100)?;
    Ok(())
}
