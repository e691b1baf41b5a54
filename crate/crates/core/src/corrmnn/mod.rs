//! Correlative dual-channel memory network.
//!
//! Each channel is unrolled through its own multi-gated cell over `T`
//! nodes. At every node both hidden outputs go through a per-channel MLP
//! with a class head and a correlation head. Training minimizes the sum of
//! the two cross-entropies and the negated, `k_corr`-normalized total
//! canonical correlation between the correlation heads, pooled over every
//! node in the batch. After training, the correlation heads give the
//! temporal features `F_tp`.

mod adam;
mod cca;
mod cell;
mod head;
mod loss;
mod params;

use std::fmt::Write as _;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binfmt::{ModelKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::ingest::BimodalSample;
use crate::numkit::Matrix;

pub use adam::Adam;
pub use cca::{cca_corr, CcaOutput};
pub use cell::{cell_backward, cell_backward_acc, cell_forward, CellCache, CellGrads, MultiGatedCellParams};
pub use head::{corr_unit_forward, CorrUnitOutput, CorrUnitParams, HeadCache, MlpHead};
pub use loss::{joint_loss, softmax_cross_entropy, JointLoss};
pub use params::{Dense, ParamSet};

/// Samples per gradient-accumulation chunk. Fixed so the reduction order
/// does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub cca_ridge: f64,
    pub seed: u64,
    pub k_corr: usize,
    /// Trunk widths of each channel's MLP.
    pub mlp_widths: Vec<usize>,
    /// Node count; defaults to the channel-1 window length.
    pub nodes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 256,
            hidden: 256,
            epochs: 50,
            cca_ridge: 1e-4,
            seed: 0,
            k_corr: 10,
            mlp_widths: vec![128, 64, 32],
            nodes: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("corrmnn {what} must be positive")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if !(self.cca_ridge > 0.0 && self.cca_ridge.is_finite()) {
            return bad("cca_ridge");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.hidden == 0 {
            return bad("hidden");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.k_corr == 0 {
            return bad("k_corr");
        }
        if self.mlp_widths.contains(&0) {
            return bad("mlp width");
        }
        if self.nodes == Some(0) {
            return bad("nodes");
        }
        Ok(())
    }
}

/// Both cells, both heads, and the node layout they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMnnModel {
    pub nodes: usize,
    pub cell1: MultiGatedCellParams,
    pub cell2: MultiGatedCellParams,
    pub unit: CorrUnitParams,
}

impl ParamSet for CorrMnnModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.cell1.tensors();
        v.extend(self.cell2.tensors());
        v.extend(self.unit.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.cell1.tensors_mut();
        v.extend(self.cell2.tensors_mut());
        v.extend(self.unit.tensors_mut());
        v
    }
}

/// Shape of a model, enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub nodes: usize,
    pub hidden: usize,
    /// Flattened per-node input width of each channel.
    pub input1: usize,
    pub input2: usize,
    pub classes: usize,
    pub k_corr: usize,
    pub mlp_widths: Vec<usize>,
}

impl CorrMnnModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(shape: &ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell1 = MultiGatedCellParams::new(&mut rng, shape.hidden, shape.input1);
        let cell2 = MultiGatedCellParams::new(&mut rng, shape.hidden, shape.input2);
        let head1 = MlpHead::new(&mut rng, shape.hidden, &shape.mlp_widths, shape.classes, shape.k_corr);
        let head2 = MlpHead::new(&mut rng, shape.hidden, &shape.mlp_widths, shape.classes, shape.k_corr);
        Self {
            nodes: shape.nodes,
            cell1,
            cell2,
            unit: CorrUnitParams { head1, head2 },
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            nodes: self.nodes,
            hidden: self.cell1.hidden(),
            input1: self.cell1.input(),
            input2: self.cell2.input(),
            classes: self.unit.head1.classes(),
            k_corr: self.unit.head1.k_corr(),
            mlp_widths: self.unit.head1.widths(),
        }
    }

    pub fn k_corr(&self) -> usize {
        self.unit.head1.k_corr()
    }

    pub fn classes(&self) -> usize {
        self.unit.head1.classes()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.shape();
        let mut w = Writer::new(ModelKind::CorrMnn);
        w.count(s.nodes)
            .count(s.hidden)
            .count(s.input1)
            .count(s.input2)
            .count(s.classes)
            .count(s.k_corr)
            .count(s.mlp_widths.len());
        for &width in &s.mlp_widths {
            w.count(width);
        }
        for t in self.tensors() {
            w.reals(t);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ModelKind::CorrMnn)?;
        let nodes = r.count()?;
        let hidden = r.count()?;
        let input1 = r.count()?;
        let input2 = r.count()?;
        let classes = r.count()?;
        let k_corr = r.count()?;
        let depth = r.count()?;
        if depth > 64 {
            return Err(Error::Model(format!("implausible MLP depth {depth}")));
        }
        let mlp_widths = (0..depth).map(|_| r.count()).collect::<Result<Vec<_>>>()?;
        let shape = ModelShape {
            nodes,
            hidden,
            input1,
            input2,
            classes,
            k_corr,
            mlp_widths,
        };
        if [nodes, hidden, input1, input2, classes, k_corr].contains(&0) || shape.mlp_widths.contains(&0) {
            return Err(Error::Model("zero-sized dimension in network header".into()));
        }
        let mut model = CorrMnnModel::new(&shape, 0);
        for (i, t) in model.tensors_mut().into_iter().enumerate() {
            let vals = r.reals_exact(t.len(), &format!("tensor {i}"))?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("non-finite weight in tensor {i}")));
            }
            t.copy_from_slice(&vals);
        }
        r.finish()?;
        Ok(model)
    }

    pub fn dump_text(&self) -> String {
        let s = self.shape();
        let mut out = format!(
            "corrmnn nodes={} hidden={} input1={} input2={} classes={} k_corr={} mlp={:?} params={}\n",
            s.nodes,
            s.hidden,
            s.input1,
            s.input2,
            s.classes,
            s.k_corr,
            s.mlp_widths,
            self.num_params()
        );
        for (i, t) in self.tensors().iter().enumerate() {
            let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            let _ = writeln!(out, "tensor {i} len={} l2={norm:.6e}", t.len());
        }
        out
    }
}

/// Splits a `rows × width` window into `nodes` consecutive row groups, each flattened row-major.
pub fn node_inputs(x: &Matrix, nodes: usize) -> Result<Vec<Vec<f64>>> {
    if nodes == 0 || x.rows() % nodes != 0 || x.rows() == 0 {
        return Err(Error::shape(format!(
            "window of {} rows cannot be split into {nodes} nodes",
            x.rows()
        )));
    }
    let per = x.rows() / nodes;
    let w = x.cols();
    Ok(x.as_slice().chunks(per * w).map(<[f64]>::to_vec).collect())
}

/// Hidden outputs of one channel at every node, with caches.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub outputs: Vec<Vec<f64>>,
    pub caches: Vec<CellCache>,
}

fn unroll(cell: &MultiGatedCellParams, inputs: &[Vec<f64>]) -> Result<ChannelTrace> {
    let mut prev = vec![0.0; cell.hidden()];
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (o, c) = cell_forward(cell, x, &prev)?;
        prev.clone_from(&o);
        outputs.push(o);
        caches.push(c);
    }
    Ok(ChannelTrace { outputs, caches })
}

/// Unrolls both channels from zero hidden state. Returns `(O₁, O₂)` traces.
pub fn dcmnn_forward(model: &CorrMnnModel, sample: &BimodalSample) -> Result<(ChannelTrace, ChannelTrace)> {
    let in1 = node_inputs(&sample.x1, model.nodes)?;
    let in2 = node_inputs(&sample.x2, model.nodes)?;
    Ok((unroll(&model.cell1, &in1)?, unroll(&model.cell2, &in2)?))
}

struct SampleTrace {
    ch1: ChannelTrace,
    ch2: ChannelTrace,
    heads1: Vec<HeadCache>,
    heads2: Vec<HeadCache>,
    logits1: Vec<Vec<f64>>,
    logits2: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
}

fn forward_sample(model: &CorrMnnModel, sample: &BimodalSample) -> Result<SampleTrace> {
    let (ch1, ch2) = dcmnn_forward(model, sample)?;
    let t = model.nodes;
    let mut tr = SampleTrace {
        heads1: Vec::with_capacity(t),
        heads2: Vec::with_capacity(t),
        logits1: Vec::with_capacity(t),
        logits2: Vec::with_capacity(t),
        h1: Vec::with_capacity(t),
        h2: Vec::with_capacity(t),
        ch1,
        ch2,
    };
    for i in 0..t {
        let (l1, h1, c1) = model.unit.head1.forward(&tr.ch1.outputs[i])?;
        let (l2, h2, c2) = model.unit.head2.forward(&tr.ch2.outputs[i])?;
        tr.logits1.push(l1);
        tr.logits2.push(l2);
        tr.h1.push(h1);
        tr.h2.push(h2);
        tr.heads1.push(c1);
        tr.heads2.push(c2);
    }
    Ok(tr)
}

/// Backpropagates per-node head gradients through one channel's unrolled cell.
fn backward_channel(
    cell: &MultiGatedCellParams,
    head: &MlpHead,
    trace: &ChannelTrace,
    heads: &[HeadCache],
    g_logits: &[&[f64]],
    g_h: &[Vec<f64>],
    acc_cell: &mut MultiGatedCellParams,
    acc_head: &mut MlpHead,
) -> Result<()> {
    let mut carry = vec![0.0; cell.hidden()];
    for i in (0..trace.outputs.len()).rev() {
        let mut g_o = head.backward(&heads[i], g_logits[i], &g_h[i], acc_head)?;
        for (g, c) in g_o.iter_mut().zip(&carry) {
            *g += c;
        }
        let (_, g_prev) = cell_backward_acc(cell, &trace.caches[i], &g_o, acc_cell)?;
        carry = g_prev;
    }
    Ok(())
}

/// Loss terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub l_corr: f64,
    pub corr: f64,
}

/// Joint loss of a batch and its gradient with respect to every model parameter.
///
/// Cross-entropies average over all (sample, node) pairs and the CCA pools
/// every node of every sample.
pub fn loss_and_grad(model: &CorrMnnModel, batch: &[&BimodalSample], cca_ridge: f64) -> Result<(BatchLoss, CorrMnnModel)> {
    let t = model.nodes;
    let traces: Vec<SampleTrace> = batch
        .par_iter()
        .map(|s| forward_sample(model, s))
        .collect::<Result<_>>()?;
    let rows = |f: fn(&SampleTrace) -> &Vec<Vec<f64>>| -> Result<Matrix> {
        let all: Vec<&Vec<f64>> = traces.iter().flat_map(|tr| f(tr).iter()).collect();
        Matrix::from_rows(&all)
    };
    let logits1 = rows(|tr| &tr.logits1)?;
    let logits2 = rows(|tr| &tr.logits2)?;
    let h1 = rows(|tr| &tr.h1)?;
    let h2 = rows(|tr| &tr.h2)?;
    let labels: Vec<usize> = batch.iter().flat_map(|s| std::iter::repeat_n(s.label, t)).collect();
    let cca = cca_corr(&h1, &h2, cca_ridge)?;
    let jl = joint_loss(&logits1, &logits2, &labels, cca.corr, model.k_corr())?;
    let loss = BatchLoss {
        total: jl.total,
        l1: jl.l1,
        l2: jl.l2,
        l_corr: jl.l_corr,
        corr: cca.corr,
    };

    let zero = model.zeros_like();
    let chunks: Vec<CorrMnnModel> = traces
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = zero.clone();
            for (j, tr) in chunk.iter().enumerate() {
                let base = (ci * GRAD_CHUNK + j) * t;
                let gl1: Vec<&[f64]> = (0..t).map(|i| jl.grad_logits1.row(base + i)).collect();
                let gl2: Vec<&[f64]> = (0..t).map(|i| jl.grad_logits2.row(base + i)).collect();
                let gh1: Vec<Vec<f64>> = (0..t)
                    .map(|i| cca.grad_h1.row(base + i).iter().map(|g| g * jl.grad_corr).collect())
                    .collect();
                let gh2: Vec<Vec<f64>> = (0..t)
                    .map(|i| cca.grad_h2.row(base + i).iter().map(|g| g * jl.grad_corr).collect())
                    .collect();
                let CorrMnnModel { cell1, cell2, unit, .. } = &mut acc;
                backward_channel(&model.cell1, &model.unit.head1, &tr.ch1, &tr.heads1, &gl1, &gh1, cell1, &mut unit.head1)?;
                backward_channel(&model.cell2, &model.unit.head2, &tr.ch2, &tr.heads2, &gl2, &gh2, cell2, &mut unit.head2)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut grad = zero;
    for c in &chunks {
        grad.accumulate(c);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub l_corr: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub loss_curve: Vec<EpochLoss>,
    /// Per-channel class-head accuracy on the training set after the last epoch.
    pub train_accuracy: [f64; 2],
}

impl TrainReport {
    /// Two-column CSV `epoch,l_total`.
    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("epoch,l_total\n");
        for e in &self.loss_curve {
            let _ = writeln!(s, "{},{}", e.epoch, e.total);
        }
        s
    }
}

/// Infers the model shape for `train` and checks every sample against it.
pub fn model_shape(train: &[BimodalSample], cfg: &TrainConfig) -> Result<ModelShape> {
    let first = train.first().ok_or_else(|| Error::input("CorrMNN needs a non-empty training set"))?;
    let nodes = cfg.nodes.unwrap_or(first.x1.rows());
    let classes = train.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    if classes < 2 {
        return Err(Error::input("CorrMNN needs at least two classes"));
    }
    let shape_of = |x: &Matrix| -> Result<usize> {
        if nodes == 0 || x.rows() % nodes != 0 || x.rows() == 0 {
            return Err(Error::shape(format!(
                "window of {} rows cannot be split into {nodes} nodes",
                x.rows()
            )));
        }
        Ok(x.rows() / nodes * x.cols())
    };
    let input1 = shape_of(&first.x1)?;
    let input2 = shape_of(&first.x2)?;
    for (i, s) in train.iter().enumerate() {
        if s.x1.shape() != first.x1.shape() || s.x2.shape() != first.x2.shape() {
            return Err(Error::shape(format!("sample {i} window shape differs from sample 0")));
        }
    }
    Ok(ModelShape {
        nodes,
        hidden: cfg.hidden,
        input1,
        input2,
        classes,
        k_corr: cfg.k_corr,
        mlp_widths: cfg.mlp_widths.clone(),
    })
}

/// Mini-batch Adam on the joint loss.
///
/// Batches are drawn from a seeded shuffle each epoch. A final batch too
/// small for the CCA (fewer than two pooled rows) is merged into its
/// predecessor.
pub fn train_corrmnn(train: &[BimodalSample], cfg: &TrainConfig) -> Result<(CorrMnnModel, TrainReport)> {
    cfg.validate()?;
    let shape = model_shape(train, cfg)?;
    let mut model = CorrMnnModel::new(&shape, cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    info!(
        "corrmnn: {} samples, {} nodes, hidden {}, {} parameters",
        train.len(),
        shape.nodes,
        shape.hidden,
        model.num_params()
    );

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        if batches.len() > 1 && batches.last().unwrap().len() * shape.nodes < 2 {
            let n = batches.len();
            let start = (n - 2) * cfg.batch_size;
            batches.truncate(n - 2);
            batches.push(&order[start..]);
        }
        let mut sums = [0.0; 4];
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<&BimodalSample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = match loss_and_grad(&model, &batch, cfg.cca_ridge) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() || !grad.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss: loss.total,
                });
            }
            opt.update(&mut model, &grad);
            for (s, v) in sums.iter_mut().zip([loss.total, loss.l1, loss.l2, loss.l_corr]) {
                *s += v;
            }
        }
        let nb = batches.len() as f64;
        let e = EpochLoss {
            epoch,
            total: sums[0] / nb,
            l1: sums[1] / nb,
            l2: sums[2] / nb,
            l_corr: sums[3] / nb,
        };
        debug!(
            "corrmnn epoch {epoch}: total {:.5} l1 {:.5} l2 {:.5} l_corr {:.5}",
            e.total, e.l1, e.l2, e.l_corr
        );
        report.loss_curve.push(e);
    }
    report.train_accuracy = channel_accuracy(&model, train)?;
    Ok((model, report))
}

/// Per-node logits and correlation outputs of one sample.
pub fn sample_outputs(model: &CorrMnnModel, sample: &BimodalSample) -> Result<Vec<CorrUnitOutput>> {
    let (ch1, ch2) = dcmnn_forward(model, sample)?;
    ch1.outputs
        .iter()
        .zip(&ch2.outputs)
        .map(|(o1, o2)| corr_unit_forward(&model.unit, o1, o2))
        .collect()
}

/// Fraction of samples whose node-averaged class-head logits pick the true label, per channel.
pub fn channel_accuracy(model: &CorrMnnModel, samples: &[BimodalSample]) -> Result<[f64; 2]> {
    if samples.is_empty() {
        return Ok([0.0; 2]);
    }
    let hits: Vec<[bool; 2]> = samples
        .par_iter()
        .map(|s| {
            let outs = sample_outputs(model, s)?;
            let c = model.classes();
            let mut m1 = vec![0.0; c];
            let mut m2 = vec![0.0; c];
            for o in &outs {
                for j in 0..c {
                    m1[j] += o.logits1[j];
                    m2[j] += o.logits2[j];
                }
            }
            Ok([argmax(&m1) == s.label, argmax(&m2) == s.label])
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let a = hits.iter().filter(|h| h[0]).count() as f64 / n;
    let b = hits.iter().filter(|h| h[1]).count() as f64 / n;
    Ok([a, b])
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Temporal feature `F_tp`: one row per node, `[H₁ᵢ, H₂ᵢ]`.
pub fn extract_temporal_features(model: &CorrMnnModel, sample: &BimodalSample) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = sample_outputs(model, sample)?
        .into_iter()
        .map(|o| {
            let mut r = o.h1;
            r.extend(o.h2);
            r
        })
        .collect();
    Matrix::from_rows(&rows)
}
