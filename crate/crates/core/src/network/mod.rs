//! Two-head residual policy/value network.
//!
//! Input is the state matrix as a 2-channel `dim × dim` image (real and
//! imaginary parts). The torso is a 3×3 convolutional stem followed by
//! residual blocks; the policy head ends in masked softmax logits and the
//! value head in a `tanh` scalar. All parameters live in one flat vector so
//! the optimizer and gradient checks can treat them uniformly.

pub mod layers;
mod optim;

use std::ops::Range;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Environment, GameState, Observation};
use crate::error::{invalid, Error, Result};
use crate::mcts::Evaluator;

use layers::{
    bn_backward, bn_forward_eval, bn_forward_train, conv_backward, conv_forward, dense_backward, dense_forward,
    masked_softmax, relu_backward_inplace, relu_inplace, BnTrace, Tensor,
};
pub use optim::OptimizerState;

pub const BN_MOMENTUM: f64 = 0.9;
pub const DEFAULT_L2: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Side of the input image (the operator dimension).
    pub dim: usize,
    pub n_actions: usize,
    pub blocks: usize,
    pub channels: usize,
    pub policy_channels: usize,
    pub value_channels: usize,
}

impl NetConfig {
    pub fn new(dim: usize, n_actions: usize) -> Self {
        Self { dim, n_actions, blocks: 5, channels: 64, policy_channels: 32, value_channels: 8 }
    }

    pub fn with_torso(mut self, blocks: usize, channels: usize) -> Self {
        self.blocks = blocks;
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_actions == 0 {
            return Err(invalid("network needs a positive input size and action count"));
        }
        if self.channels == 0 || self.policy_channels == 0 || self.value_channels == 0 {
            return Err(invalid("channel counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvBn {
    w: usize,
    gamma: usize,
    beta: usize,
    cin: usize,
    cout: usize,
    k: usize,
    /// Offset into the running statistics.
    stat: usize,
}

impl ConvBn {
    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.cout * self.cin * self.k * self.k]
    }
    fn gamma<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.gamma..self.gamma + self.cout]
    }
    fn beta<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.beta..self.beta + self.cout]
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Dense {
    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.inp * self.out]
    }
    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.out]
    }
}

#[derive(Clone, Debug)]
struct Layout {
    stem: ConvBn,
    blocks: Vec<[ConvBn; 2]>,
    policy_conv: ConvBn,
    policy_dense: Dense,
    value_conv: ConvBn,
    value_dense: Dense,
    n_params: usize,
    n_stats: usize,
    /// Convolution and dense weight segments (the L2-regularized ones).
    weights: Vec<Range<usize>>,
}

#[derive(Default)]
struct LayoutBuilder {
    offset: usize,
    stat: usize,
    weights: Vec<Range<usize>>,
}

impl LayoutBuilder {
    fn take(&mut self, n: usize) -> usize {
        let at = self.offset;
        self.offset += n;
        at
    }

    fn conv_bn(&mut self, cin: usize, cout: usize, k: usize) -> ConvBn {
        let w = self.take(cout * cin * k * k);
        self.weights.push(w..self.offset);
        let gamma = self.take(cout);
        let beta = self.take(cout);
        let stat = self.stat;
        self.stat += cout;
        ConvBn { w, gamma, beta, cin, cout, k, stat }
    }

    fn dense(&mut self, inp: usize, out: usize) -> Dense {
        let w = self.take(inp * out);
        self.weights.push(w..self.offset);
        let b = self.take(out);
        Dense { w, b, inp, out }
    }
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let hw = cfg.dim * cfg.dim;
        let mut b = LayoutBuilder::default();
        let stem = b.conv_bn(2, cfg.channels, 3);
        let blocks = (0..cfg.blocks)
            .map(|_| [b.conv_bn(cfg.channels, cfg.channels, 3), b.conv_bn(cfg.channels, cfg.channels, 3)])
            .collect();
        let policy_conv = b.conv_bn(cfg.channels, cfg.policy_channels, 1);
        let policy_dense = b.dense(cfg.policy_channels * hw, cfg.n_actions);
        let value_conv = b.conv_bn(cfg.channels, cfg.value_channels, 1);
        let value_dense = b.dense(cfg.value_channels * hw, 1);
        Layout {
            stem,
            blocks,
            policy_conv,
            policy_dense,
            value_conv,
            value_dense,
            n_params: b.offset,
            n_stats: b.stat,
            weights: b.weights,
        }
    }

    fn conv_layers(&self) -> Vec<ConvBn> {
        let mut v = vec![self.stem];
        for blk in &self.blocks {
            v.extend_from_slice(blk);
        }
        v.push(self.policy_conv);
        v.push(self.value_conv);
        v
    }
}

/// One supervised batch: observation planes, search policies, outcome
/// values and legality masks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainBatch {
    pub observations: Vec<Vec<f64>>,
    pub policies: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, policy: Vec<f64>, value: f64, mask: Vec<bool>) {
        self.observations.push(obs);
        self.policies.push(policy);
        self.values.push(value);
        self.masks.push(mask);
    }
}

#[derive(Clone, Debug)]
struct BlockTrace {
    a_bn: Option<BnTrace>,
    a_out: Tensor,
    b_bn: Option<BnTrace>,
    out: Tensor,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
struct Trace {
    input: Tensor,
    stem_bn: Option<BnTrace>,
    stem_out: Tensor,
    blocks: Vec<BlockTrace>,
    policy_bn: Option<BnTrace>,
    policy_feat: Tensor,
    value_bn: Option<BnTrace>,
    value_feat: Tensor,
    logits: Vec<f64>,
    values: Vec<f64>,
}

/// Parameters plus batch-norm running statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct Network {
    config: NetConfig,
    layout: Layout,
    pub params: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    config: NetConfig,
    params: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(f: NetworkFile) -> Result<Self> {
        f.config.validate()?;
        let layout = Layout::new(&f.config);
        if f.params.len() != layout.n_params
            || f.running_mean.len() != layout.n_stats
            || f.running_var.len() != layout.n_stats
        {
            return Err(Error::Checkpoint("parameter count does not match the network shape".into()));
        }
        Ok(Network {
            config: f.config,
            layout,
            params: f.params,
            running_mean: f.running_mean,
            running_var: f.running_var,
        })
    }
}

impl From<Network> for NetworkFile {
    fn from(n: Network) -> Self {
        NetworkFile { config: n.config, params: n.params, running_mean: n.running_mean, running_var: n.running_var }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params == other.params
            && self.running_mean == other.running_mean
            && self.running_var == other.running_var
    }
}

/// Which coordinates a gradient check samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckScope {
    All,
    /// Only the final dense layers of both heads.
    HeadDense,
}

impl Network {
    /// Fan-in scaled normal weights, unit batch-norm scale, zero offsets.
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.n_params];
        for l in layout.conv_layers() {
            let fan_in = (l.cin * l.k * l.k) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for v in &mut params[l.w..l.w + l.cout * l.cin * l.k * l.k] {
                *v = normal.sample(rng);
            }
            params[l.gamma..l.gamma + l.cout].fill(1.0);
        }
        for d in [layout.policy_dense, layout.value_dense] {
            let normal = Normal::new(0.0, (1.0 / d.inp as f64).sqrt()).expect("positive std");
            for v in &mut params[d.w..d.w + d.inp * d.out] {
                *v = normal.sample(rng);
            }
        }
        let n_stats = layout.n_stats;
        Ok(Self { config, layout, params, running_mean: vec![0.0; n_stats], running_var: vec![1.0; n_stats] })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.layout.n_params
    }

    /// Ranges of the flat parameter vector that carry L2 regularization.
    pub fn weight_ranges(&self) -> &[Range<usize>] {
        &self.layout.weights
    }

    /// Range of the policy head's dense bias.
    pub fn policy_bias_range(&self) -> Range<usize> {
        let d = self.layout.policy_dense;
        d.b..d.b + d.out
    }

    /// Index of the value head's dense bias.
    pub fn value_bias_index(&self) -> usize {
        self.layout.value_dense.b
    }

    pub fn l2_penalty(&self, params: &[f64], l2: f64) -> f64 {
        l2 * self.layout.weights.iter().map(|r| params[r.clone()].iter().map(|w| w * w).sum::<f64>()).sum::<f64>()
    }

    fn check_inputs(&self, obs: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<()> {
        let want = 2 * self.config.dim * self.config.dim;
        if obs.is_empty() {
            return Err(invalid("empty batch"));
        }
        if obs.len() != masks.len() {
            return Err(invalid("observation and mask counts differ"));
        }
        if let Some(o) = obs.iter().find(|o| o.len() != want) {
            return Err(invalid(format!("observation has {} values, expected {want}", o.len())));
        }
        if let Some(m) = masks.iter().find(|m| m.len() != self.config.n_actions) {
            return Err(invalid(format!("mask has {} entries, expected {}", m.len(), self.config.n_actions)));
        }
        Ok(())
    }

    fn conv_bn(&self, p: &[f64], l: &ConvBn, x: &Tensor, train: bool) -> (Tensor, Option<BnTrace>) {
        let y = conv_forward(x, l.weight(p), l.cout, l.k);
        if train {
            let (z, t) = bn_forward_train(&y, l.gamma(p), l.beta(p));
            (z, Some(t))
        } else {
            let s = l.stat..l.stat + l.cout;
            (bn_forward_eval(&y, l.gamma(p), l.beta(p), &self.running_mean[s.clone()], &self.running_var[s]), None)
        }
    }

    fn run(&self, p: &[f64], obs: &[Vec<f64>], mode: Mode) -> Trace {
        let train = mode == Mode::Train;
        let d = self.config.dim;
        let n = obs.len();
        let input = Tensor::from_vec(n, 2, d, d, obs.concat());
        let (mut stem_out, stem_bn) = self.conv_bn(p, &self.layout.stem, &input, train);
        relu_inplace(&mut stem_out);
        let mut blocks: Vec<BlockTrace> = Vec::with_capacity(self.layout.blocks.len());
        for blk in &self.layout.blocks {
            let x = blocks.last().map(|b| &b.out).unwrap_or(&stem_out);
            let (mut a_out, a_bn) = self.conv_bn(p, &blk[0], x, train);
            relu_inplace(&mut a_out);
            let (mut out, b_bn) = self.conv_bn(p, &blk[1], &a_out, train);
            for (o, s) in out.data.iter_mut().zip(&x.data) {
                *o += s;
            }
            relu_inplace(&mut out);
            blocks.push(BlockTrace { a_bn, a_out, b_bn, out });
        }
        let torso = blocks.last().map(|b| &b.out).unwrap_or(&stem_out);
        let (mut policy_feat, policy_bn) = self.conv_bn(p, &self.layout.policy_conv, torso, train);
        relu_inplace(&mut policy_feat);
        let (mut value_feat, value_bn) = self.conv_bn(p, &self.layout.value_conv, torso, train);
        relu_inplace(&mut value_feat);
        let pd = self.layout.policy_dense;
        let logits = dense_forward(&policy_feat.data, n, pd.weight(p), pd.bias(p));
        let vd = self.layout.value_dense;
        let values = dense_forward(&value_feat.data, n, vd.weight(p), vd.bias(p)).into_iter().map(f64::tanh).collect();
        Trace { input, stem_bn, stem_out, blocks, policy_bn, policy_feat, value_bn, value_feat, logits, values }
    }

    /// Policy (masked softmax) and value per sample.
    pub fn predict_batch(&self, obs: &[Vec<f64>], masks: &[Vec<bool>], mode: Mode) -> Result<Vec<(Vec<f64>, f64)>> {
        self.check_inputs(obs, masks)?;
        let t = self.run(&self.params, obs, mode);
        let a = self.config.n_actions;
        Ok((0..obs.len()).map(|i| (masked_softmax(&t.logits[i * a..(i + 1) * a], &masks[i]), t.values[i])).collect())
    }

    pub fn forward(&self, obs: &Observation, mask: &[bool], mode: Mode) -> Result<(Vec<f64>, f64)> {
        if obs.dim != self.config.dim {
            return Err(invalid(format!(
                "observation dimension {} does not match network input {}",
                obs.dim, self.config.dim
            )));
        }
        let mut out = self.predict_batch(&[obs.planes()], &[mask.to_vec()], mode)?;
        Ok(out.pop().expect("one sample"))
    }

    fn check_batch(&self, batch: &TrainBatch) -> Result<()> {
        self.check_inputs(&batch.observations, &batch.masks)?;
        if batch.policies.len() != batch.len() || batch.values.len() != batch.len() {
            return Err(invalid("batch fields have different lengths"));
        }
        for (p, m) in batch.policies.iter().zip(&batch.masks) {
            if p.len() != m.len() {
                return Err(invalid("policy and mask lengths differ"));
            }
            if p.iter().zip(m).any(|(&v, &l)| v < 0.0 || (!l && v != 0.0)) {
                return Err(invalid("target policy has mass on an illegal action"));
            }
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(invalid("target policy does not sum to one"));
            }
        }
        Ok(())
    }

    /// Mean cross-entropy plus squared value error, and the gradients of that
    /// mean with respect to the logits and pre-`tanh` values.
    fn data_loss(&self, t: &Trace, batch: &TrainBatch) -> (f64, Vec<f64>, Vec<f64>) {
        let a = self.config.n_actions;
        let n = batch.len() as f64;
        let mut total = 0.0;
        let mut dlogits = vec![0.0; t.logits.len()];
        let mut dvalue = vec![0.0; t.values.len()];
        for i in 0..batch.len() {
            let logits = &t.logits[i * a..(i + 1) * a];
            let mask = &batch.masks[i];
            let target = &batch.policies[i];
            let max = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
            let lse =
                max + logits.iter().zip(mask).filter(|(_, &m)| m).map(|(&l, _)| (l - max).exp()).sum::<f64>().ln();
            let mass: f64 = target.iter().sum();
            for j in 0..a {
                if !mask[j] {
                    continue;
                }
                if target[j] > 0.0 {
                    total -= target[j] * (logits[j] - lse);
                }
                let p = (logits[j] - lse).exp();
                dlogits[i * a + j] = (p * mass - target[j]) / n;
            }
            let v = t.values[i];
            let err = v - batch.values[i];
            total += err * err;
            dvalue[i] = 2.0 * err * (1.0 - v * v) / n;
        }
        (total / n, dlogits, dvalue)
    }

    /// Training-mode loss at the given parameters.
    pub fn loss_at(&self, params: &[f64], batch: &TrainBatch, l2: f64) -> Result<f64> {
        self.check_batch(batch)?;
        if params.len() != self.layout.n_params {
            return Err(invalid("parameter vector has the wrong length"));
        }
        let t = self.run(params, &batch.observations, Mode::Train);
        Ok(self.data_loss(&t, batch).0 + self.l2_penalty(params, l2))
    }

    pub fn loss(&self, batch: &TrainBatch, l2: f64) -> Result<f64> {
        self.loss_at(&self.params, batch, l2)
    }

    fn conv_bn_backward(
        &self,
        p: &[f64],
        l: &ConvBn,
        input: &Tensor,
        bn: &BnTrace,
        d_out: &Tensor,
        grad: &mut [f64],
    ) -> Tensor {
        let (d_conv, dg, db) = bn_backward(d_out, bn, l.gamma(p));
        add_into(&mut grad[l.gamma..l.gamma + l.cout], &dg);
        add_into(&mut grad[l.beta..l.beta + l.cout], &db);
        let (dx, dw) = conv_backward(input, l.weight(p), &d_conv, l.k);
        add_into(&mut grad[l.w..l.w + dw.len()], &dw);
        dx
    }

    /// Loss and its gradient with respect to every parameter, plus the trace
    /// for running-statistics updates.
    fn loss_and_gradient(&self, p: &[f64], batch: &TrainBatch, l2: f64) -> (f64, Vec<f64>, Trace) {
        let t = self.run(p, &batch.observations, Mode::Train);
        let (data, dlogits, dvalue) = self.data_loss(&t, batch);
        let n = batch.len();
        let mut grad = vec![0.0; p.len()];
        let bn = |b: &Option<BnTrace>| b.clone().expect("train-mode trace");

        let pd = self.layout.policy_dense;
        let (dpf, dw, db) = dense_backward(&t.policy_feat.data, n, pd.weight(p), &dlogits);
        add_into(&mut grad[pd.w..pd.w + dw.len()], &dw);
        add_into(&mut grad[pd.b..pd.b + db.len()], &db);
        let mut dpf = Tensor::from_vec(n, t.policy_feat.c, t.policy_feat.h, t.policy_feat.w, dpf);
        relu_backward_inplace(&mut dpf, &t.policy_feat);

        let vd = self.layout.value_dense;
        let (dvf, dw, db) = dense_backward(&t.value_feat.data, n, vd.weight(p), &dvalue);
        add_into(&mut grad[vd.w..vd.w + dw.len()], &dw);
        add_into(&mut grad[vd.b..vd.b + db.len()], &db);
        let mut dvf = Tensor::from_vec(n, t.value_feat.c, t.value_feat.h, t.value_feat.w, dvf);
        relu_backward_inplace(&mut dvf, &t.value_feat);

        let torso = t.blocks.last().map(|b| &b.out).unwrap_or(&t.stem_out);
        let mut d_torso = self.conv_bn_backward(p, &self.layout.policy_conv, torso, &bn(&t.policy_bn), &dpf, &mut grad);
        let dv = self.conv_bn_backward(p, &self.layout.value_conv, torso, &bn(&t.value_bn), &dvf, &mut grad);
        add_into(&mut d_torso.data, &dv.data);

        for (k, blk) in self.layout.blocks.iter().enumerate().rev() {
            let bt = &t.blocks[k];
            let x = if k == 0 { &t.stem_out } else { &t.blocks[k - 1].out };
            relu_backward_inplace(&mut d_torso, &bt.out);
            let mut d_a = self.conv_bn_backward(p, &blk[1], &bt.a_out, &bn(&bt.b_bn), &d_torso, &mut grad);
            relu_backward_inplace(&mut d_a, &bt.a_out);
            let dx = self.conv_bn_backward(p, &blk[0], x, &bn(&bt.a_bn), &d_a, &mut grad);
            add_into(&mut d_torso.data, &dx.data);
        }
        relu_backward_inplace(&mut d_torso, &t.stem_out);
        self.conv_bn_backward(p, &self.layout.stem, &t.input, &bn(&t.stem_bn), &d_torso, &mut grad);

        for r in &self.layout.weights {
            for i in r.clone() {
                grad[i] += 2.0 * l2 * p[i];
            }
        }
        (data + self.l2_penalty(p, l2), grad, t)
    }

    /// Analytic gradient of [`Network::loss`].
    pub fn gradient(&self, batch: &TrainBatch, l2: f64) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let (l, g, _) = self.loss_and_gradient(&self.params, batch, l2);
        Ok((l, g))
    }

    fn update_running_stats(&mut self, t: &Trace) {
        let mut pairs: Vec<(ConvBn, &BnTrace)> = vec![(self.layout.stem, t.stem_bn.as_ref().unwrap())];
        for (blk, bt) in self.layout.blocks.iter().zip(&t.blocks) {
            pairs.push((blk[0], bt.a_bn.as_ref().unwrap()));
            pairs.push((blk[1], bt.b_bn.as_ref().unwrap()));
        }
        pairs.push((self.layout.policy_conv, t.policy_bn.as_ref().unwrap()));
        pairs.push((self.layout.value_conv, t.value_bn.as_ref().unwrap()));
        let m = (t.input.n * t.input.h * t.input.w) as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (l, bn) in pairs {
            for c in 0..l.cout {
                let s = l.stat + c;
                self.running_mean[s] = BN_MOMENTUM * self.running_mean[s] + (1.0 - BN_MOMENTUM) * bn.mean[c];
                self.running_var[s] = BN_MOMENTUM * self.running_var[s] + (1.0 - BN_MOMENTUM) * bn.var[c] * unbias;
            }
        }
    }

    /// One Adam step on `batch`; returns the loss before the update.
    pub fn train_step(&mut self, opt: &mut OptimizerState, batch: &TrainBatch) -> Result<f64> {
        self.check_batch(batch)?;
        if opt.len() != self.params.len() {
            return Err(invalid("optimizer state does not match the network"));
        }
        let (loss, grad, trace) = self.loss_and_gradient(&self.params, batch, opt.l2);
        if !loss.is_finite() {
            return Err(Error::TrainingDivergence);
        }
        opt.apply(&mut self.params, &grad)?;
        self.update_running_stats(&trace);
        Ok(loss)
    }

    /// Maximum relative error between analytic and central-difference
    /// gradients over `sample_count` random coordinates.
    pub fn gradient_check<R: Rng + ?Sized>(
        &self,
        batch: &TrainBatch,
        sample_count: usize,
        l2: f64,
        scope: CheckScope,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_batch(batch)?;
        let (_, grad, _) = self.loss_and_gradient(&self.params, batch, l2);
        let pool: Vec<usize> = match scope {
            CheckScope::All => (0..self.params.len()).collect(),
            CheckScope::HeadDense => {
                let mut v = Vec::new();
                for d in [self.layout.policy_dense, self.layout.value_dense] {
                    v.extend(d.w..d.w + d.inp * d.out);
                    v.extend(d.b..d.b + d.out);
                }
                v
            }
        };
        let picks = sample(rng, pool.len(), sample_count.min(pool.len()));
        let mut p = self.params.clone();
        let mut worst: f64 = 0.0;
        for k in picks {
            let i = pool[k];
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = self.loss_at(&p, batch, l2)?;
            p[i] = orig - FD_STEP;
            let down = self.loss_at(&p, batch, l2)?;
            p[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grad[i], numeric));
        }
        Ok(worst)
    }
}

/// `|a − b| / max(|a| + |b|, 1e-6)`; the floor keeps coordinates with
/// vanishing gradient from reporting rounding noise as error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Evaluator for Network {
    fn evaluate(&self, env: &Environment, state: &GameState) -> (Vec<f64>, f64) {
        self.forward(&env.observe(state), &state.mask, Mode::Eval)
            .expect("network shape is checked against the environment before search")
    }
}
