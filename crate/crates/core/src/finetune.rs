//! Gradient-based fine-tuning of a transition matrix.
//!
//! Each training pair holds the belief of a window of the training trace and
//! the beliefs of the `t_train` windows that follow it. The forward pass
//! rolls the input through the matrix `t_train` times; the loss compares each
//! rolled-out belief with its label. Gradients are propagated backwards
//! through the recurrence by hand:
//!
//! ```text
//! s_k = s_{k-1} P                         (k = 1..T, s_0 = input)
//! g_T = dL/ds_T
//! dL/dP += s_{k-1}^T g_k
//! g_{k-1} = g_k P^T + dL/ds_{k-1}
//! ```
//!
//! Two ways of keeping the matrix stochastic are supported. With
//! `logits-softmax` the optimizer works on unconstrained row logits
//! initialized to `log(P + 1e-8)` and the matrix is their row softmax. With
//! `project` the optimizer updates `P` directly and every row is then
//! clamped at zero and renormalized.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{MarkovModel, TransitionMatrix};
use crate::optim::{Optimizer, OptimizerKind};
use crate::statespace::{Belief, StateSpace};
use crate::traffic::Trace;

/// Offset added before taking logs when initializing row logits.
pub const LOGIT_EPS: f64 = 1e-8;

/// Offset inside the cross-entropy log.
pub const CE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    #[default]
    LogitsSoftmax,
    Project,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub t_train: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub plateau_tol: f64,
    pub parameterization: Parameterization,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            t_train: 1,
            epochs: 50,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::Mse,
            plateau_tol: 1e-4,
            parameterization: Parameterization::LogitsSoftmax,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_train == 0 {
            return Err(Error::invalid("t_train must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(self.plateau_tol.is_finite() && self.plateau_tol >= 0.0) {
            return Err(Error::invalid("plateau tolerance must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Input belief and the `t_train` beliefs that follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Belief,
    pub labels: Vec<Belief>,
}

/// Sliding-window pairs over `trace`: the window ending at slot `t` is the
/// input and the windows ending at `t + 1 ..= t + t_train` are the labels.
pub fn build_pairs(space: &StateSpace, trace: &Trace, t_train: usize) -> Result<Vec<TrainingPair>> {
    if t_train == 0 {
        return Err(Error::invalid("t_train must be at least 1"));
    }
    let order = space.order();
    let needed = order + t_train;
    if trace.len() < needed {
        return Err(Error::TraceTooShort {
            needed,
            actual: trace.len(),
        });
    }
    let n = space.size();
    let beliefs: Vec<Belief> = (order - 1..trace.len())
        .map(|t| {
            let mut probs = vec![0.0; n];
            for (i, w) in space.window_states(&trace.window(t, order)) {
                probs[i] += w;
            }
            Belief::from_vec_unchecked(probs)
        })
        .collect();
    Ok((0..beliefs.len() - t_train)
        .map(|k| TrainingPair {
            input: beliefs[k].clone(),
            labels: beliefs[k + 1..=k + t_train].to_vec(),
        })
        .collect())
}

/// Rolled-out beliefs of one pair and its loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub predicted: Vec<Vec<f64>>,
    pub loss: f64,
}

fn step_dense(p: &[f64], n: usize, s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, &si) in s.iter().enumerate() {
        if si == 0.0 {
            continue;
        }
        for (o, &pij) in out.iter_mut().zip(&p[i * n..(i + 1) * n]) {
            *o += si * pij;
        }
    }
    out
}

fn pair_loss(loss: LossKind, predicted: &[f64], label: &[f64]) -> f64 {
    match loss {
        LossKind::Mse => predicted
            .iter()
            .zip(label)
            .map(|(p, s)| (p - s) * (p - s))
            .sum(),
        LossKind::CrossEntropy => -predicted
            .iter()
            .zip(label)
            .filter(|(_, &s)| s != 0.0)
            .map(|(p, s)| s * (p + CE_EPS).ln())
            .sum::<f64>(),
    }
}

fn loss_grad(loss: LossKind, predicted: &[f64], label: &[f64], out: &mut [f64]) {
    for ((o, &p), &s) in out.iter_mut().zip(predicted).zip(label) {
        *o += match loss {
            LossKind::Mse => 2.0 * (p - s),
            LossKind::CrossEntropy => -s / (p + CE_EPS),
        };
    }
}

fn forward_dense(p: &[f64], n: usize, pair: &TrainingPair, loss: LossKind) -> Forward {
    let mut predicted = Vec::with_capacity(pair.labels.len());
    let mut s = pair.input.as_slice().to_vec();
    let mut total = 0.0;
    for label in &pair.labels {
        s = step_dense(p, n, &s);
        total += pair_loss(loss, &s, label.as_slice());
        predicted.push(s.clone());
    }
    Forward {
        predicted,
        loss: total,
    }
}

/// Accumulates `dL/dP` of one pair into `grad` (row-major `n x n`).
fn backward_dense(
    p: &[f64],
    n: usize,
    pair: &TrainingPair,
    fwd: &Forward,
    loss: LossKind,
    weight: f64,
    grad: &mut [f64],
) {
    let steps = pair.labels.len();
    let mut g = vec![0.0; n];
    for k in (0..steps).rev() {
        loss_grad(loss, &fwd.predicted[k], pair.labels[k].as_slice(), &mut g);
        let prev = if k == 0 {
            pair.input.as_slice()
        } else {
            fwd.predicted[k - 1].as_slice()
        };
        for (i, &si) in prev.iter().enumerate() {
            if si == 0.0 {
                continue;
            }
            let w = weight * si;
            for (gij, &gj) in grad[i * n..(i + 1) * n].iter_mut().zip(&g) {
                *gij += w * gj;
            }
        }
        if k > 0 {
            // g <- g P^T
            g = (0..n)
                .map(|i| {
                    p[i * n..(i + 1) * n]
                        .iter()
                        .zip(&g)
                        .map(|(pij, gj)| pij * gj)
                        .sum()
                })
                .collect();
        }
    }
}

fn check_dims(matrix: &TransitionMatrix, pair: &TrainingPair) -> Result<()> {
    let n = matrix.n();
    for b in std::iter::once(&pair.input).chain(&pair.labels) {
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
    }
    Ok(())
}

/// Roll one pair forward through `matrix` and score it.
pub fn forward(matrix: &TransitionMatrix, pair: &TrainingPair, loss: LossKind) -> Result<Forward> {
    check_dims(matrix, pair)?;
    let p = matrix.to_dense()?;
    Ok(forward_dense(&p, matrix.n(), pair, loss))
}

/// Exact `dL/dP` of one pair, row-major.
pub fn backward(matrix: &TransitionMatrix, pair: &TrainingPair, loss: LossKind) -> Result<Vec<f64>> {
    check_dims(matrix, pair)?;
    let n = matrix.n();
    let p = matrix.to_dense()?;
    let fwd = forward_dense(&p, n, pair, loss);
    let mut grad = vec![0.0; n * n];
    backward_dense(&p, n, pair, &fwd, loss, 1.0, &mut grad);
    Ok(grad)
}

/// Summed loss and gradient over a batch of pairs, evaluated on a raw
/// row-major matrix (which need not be stochastic).
pub fn batch_loss_and_grad(
    p: &[f64],
    n: usize,
    pairs: &[TrainingPair],
    loss: LossKind,
) -> (f64, Vec<f64>) {
    let weighted: Vec<(&TrainingPair, f64)> = pairs.iter().map(|p| (p, 1.0)).collect();
    weighted_loss_and_grad(p, n, &weighted, loss)
}

fn weighted_loss_and_grad(
    p: &[f64],
    n: usize,
    pairs: &[(&TrainingPair, f64)],
    loss: LossKind,
) -> (f64, Vec<f64>) {
    const CHUNK: usize = 64;
    // fixed chunking and in-order reduction keep results run-to-run identical
    let partials: Vec<(f64, Vec<f64>)> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n * n];
            let mut total = 0.0;
            for &(pair, w) in chunk {
                let fwd = forward_dense(p, n, pair, loss);
                total += w * fwd.loss;
                backward_dense(p, n, pair, &fwd, loss, w, &mut grad);
            }
            (total, grad)
        })
        .collect();
    let mut grad = vec![0.0; n * n];
    let mut total = 0.0;
    for (l, g) in partials {
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grad)
}

fn softmax_rows(logits: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for (row_in, row_out) in logits.chunks(n).zip(out.chunks_mut(n)) {
        let max = row_in.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &z) in row_out.iter_mut().zip(row_in) {
            *o = (z - max).exp();
            total += *o;
        }
        for o in row_out.iter_mut() {
            *o /= total;
        }
    }
    out
}

/// Clamp negatives to zero and renormalize each row; a row with no
/// positive mass left becomes uniform.
pub fn project_rows(p: &mut [f64], n: usize) {
    for row in p.chunks_mut(n) {
        let mut total = 0.0;
        for v in row.iter_mut() {
            if *v < 0.0 || !v.is_finite() {
                *v = 0.0;
            }
            total += *v;
        }
        if total > 0.0 {
            for v in row.iter_mut() {
                *v /= total;
            }
        } else {
            row.fill(1.0 / n as f64);
        }
    }
}

/// Pairs that are exactly equal are merged into one weighted entry.
fn merge_duplicates(pairs: &[TrainingPair]) -> Vec<(&TrainingPair, f64)> {
    let key = |p: &TrainingPair| -> Vec<u64> {
        std::iter::once(&p.input)
            .chain(&p.labels)
            .flat_map(|b| b.as_slice().iter().map(|x| x.to_bits()))
            .collect()
    };
    let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut merged: Vec<(&TrainingPair, f64)> = Vec::new();
    for p in pairs {
        match slot.entry(key(p)) {
            std::collections::hash_map::Entry::Occupied(e) => merged[*e.get()].1 += 1.0,
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(merged.len());
                merged.push((p, 1.0));
            }
        }
    }
    merged
}

/// Optimizer state for fine-tuning one matrix; one call to
/// [`step`](Finetuner::step) is one full-batch epoch.
pub struct Finetuner<'a> {
    config: FinetuneConfig,
    n: usize,
    pairs: Vec<(&'a TrainingPair, f64)>,
    params: Vec<f64>,
    matrix: Vec<f64>,
    optimizer: Optimizer,
    loss: f64,
    grad: Vec<f64>,
}

impl<'a> Finetuner<'a> {
    pub fn new(
        initial: &TransitionMatrix,
        pairs: &'a [TrainingPair],
        config: &FinetuneConfig,
    ) -> Result<Self> {
        config.validate()?;
        if pairs.is_empty() {
            return Err(Error::invalid("no training pairs"));
        }
        for pair in pairs {
            check_dims(initial, pair)?;
        }
        let n = initial.n();
        let matrix = initial.to_dense()?;
        let params = match config.parameterization {
            Parameterization::LogitsSoftmax => {
                matrix.iter().map(|&p| (p + LOGIT_EPS).ln()).collect()
            }
            Parameterization::Project => matrix.clone(),
        };
        let pairs = merge_duplicates(pairs);
        let (loss, grad) = weighted_loss_and_grad(&matrix, n, &pairs, config.loss);
        Ok(Finetuner {
            config: config.clone(),
            n,
            optimizer: Optimizer::new(config.optimizer, config.learning_rate, n * n),
            pairs,
            params,
            matrix,
            loss,
            grad,
        })
    }

    /// Loss of the current matrix, summed over all pairs.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Current row-major matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// One optimizer update; returns the loss after it.
    pub fn step(&mut self) -> f64 {
        let n = self.n;
        let param_grad = match self.config.parameterization {
            Parameterization::LogitsSoftmax => {
                // dL/dz_ik = p_ik (dL/dp_ik - sum_j dL/dp_ij p_ij)
                let mut gz = vec![0.0; n * n];
                for i in 0..n {
                    let p = &self.matrix[i * n..(i + 1) * n];
                    let g = &self.grad[i * n..(i + 1) * n];
                    let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    for k in 0..n {
                        gz[i * n + k] = p[k] * (g[k] - inner);
                    }
                }
                gz
            }
            Parameterization::Project => self.grad.clone(),
        };
        if self.optimizer.step(&mut self.params, &param_grad) {
            match self.config.parameterization {
                Parameterization::LogitsSoftmax => {
                    self.matrix = softmax_rows(&self.params, n);
                }
                Parameterization::Project => {
                    project_rows(&mut self.params, n);
                    self.matrix.clone_from(&self.params);
                }
            }
        }
        let (loss, grad) =
            weighted_loss_and_grad(&self.matrix, n, &self.pairs, self.config.loss);
        self.loss = loss;
        self.grad = grad;
        loss
    }

    pub fn into_matrix(self) -> Result<TransitionMatrix> {
        TransitionMatrix::from_dense(self.n, self.matrix)
    }
}

/// Fine-tuned model and the loss after every epoch (index 0 is the
/// initial loss).
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: MarkovModel,
    pub loss_trace: Vec<f64>,
}

impl FinetuneOutcome {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{e},{l:e}\n"));
        }
        out
    }
}

pub fn finetune(
    model: &MarkovModel,
    pairs: &[TrainingPair],
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    let mut tuner = Finetuner::new(model.matrix(), pairs, config)?;
    let mut trace = vec![tuner.loss()];
    if !tuner.loss().is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            loss: tuner.loss(),
        });
    }
    for epoch in 1..=config.epochs {
        let prev = tuner.loss();
        let loss = tuner.step();
        trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        let rel = (prev - loss).abs() / prev.abs().max(f64::MIN_POSITIVE);
        if rel < config.plateau_tol {
            break;
        }
    }
    let mut tuned = model.with_matrix(tuner.into_matrix()?)?;
    tuned.meta_mut().finetuned = true;
    Ok(FinetuneOutcome {
        model: tuned,
        loss_trace: trace,
    })
}
