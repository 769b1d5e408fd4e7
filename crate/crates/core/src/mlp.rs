//! Feed-forward neural-network baseline.
//!
//! Input: the last `M` sensed slots (most recent first). Output: one sigmoid
//! unit per horizon `1..=t_train`, read as the probability that the channel
//! is active that many slots ahead. Hidden layers use ReLU. Training
//! minimizes the mean squared error with mini-batch Adam.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::Prediction;
use crate::optim::Adam;
use crate::traffic::Trace;

const MODEL_MAGIC: &str = "specpred-mlp 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub input_size: usize,
    pub output_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    /// Fraction of pairs held out for early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            input_size: 1,
            output_size: 1,
            hidden_sizes: vec![80, 80, 80],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            rng_seed: 0,
            validation_fraction: 0.1,
            patience: 10,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(Error::invalid("input and output sizes must be positive"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Sensed window and the states that follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct NnPair {
    pub input: Vec<u8>,
    pub label: Vec<u8>,
}

/// Sliding-window pairs: at every slot `t` with enough history and future,
/// input = the `m` states ending at `t` (most recent first), label = the
/// `t_train` states after `t`.
pub fn build_nn_pairs(trace: &Trace, m: usize, t_train: usize) -> Result<Vec<NnPair>> {
    if m == 0 || t_train == 0 {
        return Err(Error::invalid("sensing length and t_train must be positive"));
    }
    let needed = m + t_train;
    if trace.len() < needed {
        return Err(Error::TraceTooShort {
            needed,
            actual: trace.len(),
        });
    }
    let q = trace.states();
    Ok((m - 1..trace.len() - t_train)
        .map(|t| NnPair {
            input: trace.window(t, m),
            label: q[t + 1..=t + t_train].to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Gradients with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    config: MlpConfig,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    /// He-initialized network; biases start at zero.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let dims: Vec<usize> = std::iter::once(config.input_size)
            .chain(config.hidden_sizes.iter().copied())
            .chain(std::iter::once(config.output_size))
            .collect();
        let layers = dims
            .windows(2)
            .map(|d| {
                let normal = Normal::new(0.0, (2.0 / d[0] as f64).sqrt()).expect("valid std");
                Layer {
                    inputs: d[0],
                    outputs: d[1],
                    weights: (0..d[0] * d[1]).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; d[1]],
                }
            })
            .collect();
        Ok(MlpModel {
            layers,
            config: config.clone(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn t_train(&self) -> usize {
        self.config.output_size
    }

    /// Activations of every layer, input first, sigmoid output last.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(acts.last().unwrap());
            let a = if k == last {
                z.into_iter().map(sigmoid).collect()
            } else {
                z.into_iter().map(|v| v.max(0.0)).collect()
            };
            acts.push(a);
        }
        acts
    }

    /// Output probabilities for every horizon `1..=t_train`.
    pub fn forward(&self, sensed: &[u8]) -> Result<Vec<f64>> {
        if sensed.len() != self.config.input_size {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_size,
                actual: sensed.len(),
            });
        }
        let x: Vec<f64> = sensed.iter().map(|&b| b as f64).collect();
        Ok(self.activations(&x).pop().unwrap())
    }

    /// Mean squared error over `pairs` and every output unit, with its
    /// gradient.
    pub fn loss_and_grad(&self, pairs: &[&NnPair]) -> (f64, Gradients) {
        let mut grads = Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        };
        let scale = 1.0 / (pairs.len() * self.config.output_size) as f64;
        let mut total = 0.0;
        let last = self.layers.len() - 1;
        for pair in pairs {
            let x: Vec<f64> = pair.input.iter().map(|&b| b as f64).collect();
            let acts = self.activations(&x);
            let out = &acts[last + 1];
            // dL/dz at the output: 2 (y_hat - y) * sigmoid'
            let mut delta: Vec<f64> = out
                .iter()
                .zip(&pair.label)
                .map(|(&yh, &y)| {
                    let err = yh - y as f64;
                    total += err * err;
                    2.0 * err * scale * yh * (1.0 - yh)
                })
                .collect();
            for k in (0..=last).rev() {
                let layer = &self.layers[k];
                let a_in = &acts[k];
                for (o, &d) in delta.iter().enumerate() {
                    grads.bias[k][o] += d;
                    let row = &mut grads.weights[k][o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, &a) in row.iter_mut().zip(a_in) {
                        *g += d * a;
                    }
                }
                if k > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, &w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                    // ReLU'
                    for (p, &a) in prev.iter_mut().zip(a_in) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        (total * scale, grads)
    }

    pub fn mse(&self, pairs: &[&NnPair]) -> f64 {
        let mut total = 0.0;
        for pair in pairs {
            let x: Vec<f64> = pair.input.iter().map(|&b| b as f64).collect();
            let out = self.activations(&x).pop().unwrap();
            total += out
                .iter()
                .zip(&pair.label)
                .map(|(yh, &y)| (yh - y as f64).powi(2))
                .sum::<f64>();
        }
        total / (pairs.len() * self.config.output_size) as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        writeln!(out, "{MODEL_MAGIC}").unwrap();
        writeln!(
            out,
            "config {}",
            serde_json::to_string(&self.config).expect("config serializes")
        )
        .unwrap();
        for layer in &self.layers {
            writeln!(out, "layer {} {}", layer.inputs, layer.outputs).unwrap();
            for row in layer.weights.chunks(layer.inputs) {
                let row: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
            let bias: Vec<String> = layer.bias.iter().map(|b| format!("{b:e}")).collect();
            writeln!(out, "{}", bias.join(" ")).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MODEL_MAGIC) {
            return Err(Error::Format(format!("{}: not a specpred MLP", path.display())));
        }
        let config: MlpConfig = lines
            .next()
            .and_then(|l| l.strip_prefix("config "))
            .ok_or_else(|| Error::Format("missing config line".into()))
            .and_then(|c| serde_json::from_str(c).map_err(|e| Error::Format(e.to_string())))?;
        config.validate()?;

        let parse_row = |line: Option<&str>, len: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| Error::Format("truncated model".into()))?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != len {
                return Err(Error::Format(format!("expected {len} values, got {}", row.len())));
            }
            Ok(row)
        };

        let expected: Vec<usize> = std::iter::once(config.input_size)
            .chain(config.hidden_sizes.iter().copied())
            .chain(std::iter::once(config.output_size))
            .collect();
        let mut layers = Vec::new();
        for d in expected.windows(2) {
            let header = lines
                .next()
                .ok_or_else(|| Error::Format("missing layer".into()))?;
            let dims: Vec<usize> = header
                .strip_prefix("layer ")
                .ok_or_else(|| Error::Format(format!("expected a layer header, got {header:?}")))?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad layer header {header:?}"))))
                .collect::<Result<_>>()?;
            if dims != d {
                return Err(Error::Format(format!("layer dims {dims:?} do not chain as {d:?}")));
            }
            let mut weights = Vec::with_capacity(d[0] * d[1]);
            for _ in 0..d[1] {
                weights.extend(parse_row(lines.next(), d[0])?);
            }
            let bias = parse_row(lines.next(), d[1])?;
            layers.push(Layer {
                inputs: d[0],
                outputs: d[1],
                weights,
                bias,
            });
        }
        Ok(MlpModel { layers, config })
    }
}

/// Trained network plus per-epoch losses.
#[derive(Debug, Clone)]
pub struct MlpOutcome {
    pub model: MlpModel,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

impl MlpOutcome {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,validation_loss\n");
        for (e, l) in self.train_loss.iter().enumerate() {
            let v = self
                .validation_loss
                .get(e)
                .map_or_else(String::new, |v| format!("{v:e}"));
            out.push_str(&format!("{},{l:e},{v}\n", e + 1));
        }
        out
    }
}

fn flatten(g: &Gradients) -> Vec<f64> {
    g.weights
        .iter()
        .zip(&g.bias)
        .flat_map(|(w, b)| w.iter().chain(b).copied())
        .collect()
}

fn apply(model: &mut MlpModel, delta: &[f64]) {
    let mut k = 0;
    for layer in &mut model.layers {
        for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *p -= delta[k];
            k += 1;
        }
    }
}

/// Mini-batch Adam on the squared error, early-stopped on a held-out split.
/// The returned model is the one with the best validation loss.
pub fn train(config: &MlpConfig, pairs: &[NnPair]) -> Result<MlpOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    for p in pairs {
        if p.input.len() != config.input_size {
            return Err(Error::DimensionMismatch {
                expected: config.input_size,
                actual: p.input.len(),
            });
        }
        if p.label.len() != config.output_size {
            return Err(Error::DimensionMismatch {
                expected: config.output_size,
                actual: p.label.len(),
            });
        }
    }

    let mut model = MlpModel::init(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (pairs.len() as f64 * config.validation_fraction).floor() as usize;
    let n_val = if pairs.len() - n_val == 0 { 0 } else { n_val };
    let validation: Vec<&NnPair> = order[..n_val].iter().map(|&i| &pairs[i]).collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let n_params: usize = model
        .layers
        .iter()
        .map(|l| l.weights.len() + l.bias.len())
        .sum();
    let mut adam = Adam::new(config.learning_rate, n_params);
    let mut delta = vec![0.0; n_params];

    let mut train_loss = Vec::new();
    let mut validation_loss = Vec::new();
    let mut best = (f64::INFINITY, model.clone());
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let batch: Vec<&NnPair> = batch.iter().map(|&i| &pairs[i]).collect();
            let (loss, grads) = model.loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.delta(&flatten(&grads), &mut delta);
            apply(&mut model, &delta);
            if model.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
        }
        let epoch_loss = epoch_loss / train_idx.len() as f64;
        train_loss.push(epoch_loss);

        if validation.is_empty() {
            best = (epoch_loss, model.clone());
            continue;
        }
        let v = model.mse(&validation);
        if !v.is_finite() {
            return Err(Error::Diverged { epoch, loss: v });
        }
        validation_loss.push(v);
        if v < best.0 {
            best = (v, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(MlpOutcome {
        model: best.1,
        train_loss,
        validation_loss,
    })
}

/// Prediction `horizon` slots ahead; only horizons the network was trained
/// for are available.
pub fn predict_nn(model: &MlpModel, sensed: &[u8], horizon: usize) -> Result<Prediction> {
    if horizon == 0 || horizon > model.t_train() {
        return Err(Error::HorizonOutOfRange {
            horizon,
            max: model.t_train(),
        });
    }
    let out = model.forward(sensed)?;
    Ok(Prediction::from_prob(out[horizon - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{generate_synthetic, SyntheticSpec};

    fn small(input: usize, output: usize, hidden: Vec<usize>) -> MlpConfig {
        MlpConfig {
            input_size: input,
            output_size: output,
            hidden_sizes: hidden,
            ..Default::default()
        }
    }

    #[test]
    fn nn_pairs_follow_window_convention() {
        let t = Trace::new(vec![1, 1, 0, 0], "t").unwrap();
        let pairs = build_nn_pairs(&t, 2, 1).unwrap();
        assert_eq!(
            pairs,
            vec![
                NnPair { input: vec![1, 1], label: vec![0] },
                NnPair { input: vec![0, 1], label: vec![0] },
            ]
        );
        assert!(build_nn_pairs(&t, 3, 2).is_err());
    }

    #[test]
    fn nn_pair_count() {
        let t = generate_synthetic(&SyntheticSpec::periodic(3, 50, 1)).unwrap();
        for (m, tt) in [(1, 1), (3, 4), (5, 10)] {
            assert_eq!(build_nn_pairs(&t, m, tt).unwrap().len(), 50 - m - tt + 1);
        }
    }

    #[test]
    fn nn_pairs_are_periodic() {
        let t = generate_synthetic(&SyntheticSpec::periodic(3, 60, 1)).unwrap();
        let pairs = build_nn_pairs(&t, 3, 4).unwrap();
        for k in 0..pairs.len() - 6 {
            assert_eq!(pairs[k], pairs[k + 6]);
        }
    }

    #[test]
    fn init_chains_dimensions() {
        let m = MlpModel::init(&small(10, 32, vec![80, 80, 80])).unwrap();
        let dims: Vec<(usize, usize)> = m.layers().iter().map(|l| (l.inputs, l.outputs)).collect();
        assert_eq!(dims, vec![(10, 80), (80, 80), (80, 80), (80, 32)]);
        assert!(MlpModel::init(&small(0, 1, vec![4])).is_err());
    }

    #[test]
    fn constant_zero_labels() {
        let pairs: Vec<NnPair> = (0..64u32)
            .map(|k| NnPair {
                input: (0..4).map(|b| ((k >> b) & 1) as u8).collect(),
                label: vec![0, 0],
            })
            .collect();
        let cfg = MlpConfig {
            epochs: 300,
            learning_rate: 0.01,
            ..small(4, 2, vec![8])
        };
        let out = train(&cfg, &pairs).unwrap();
        for p in &pairs {
            assert!(out.model.forward(&p.input).unwrap().iter().all(|&y| y < 0.1));
        }
    }

    #[test]
    fn training_is_reproducible() {
        let t = generate_synthetic(&SyntheticSpec {
            block_size: 3,
            n_slots: 200,
            start_state: 1,
            outlier_rate: 0.05,
            rng_seed: 4,
        })
        .unwrap();
        let pairs = build_nn_pairs(&t, 3, 4).unwrap();
        let cfg = MlpConfig {
            epochs: 5,
            ..small(3, 4, vec![6, 6])
        };
        let a = train(&cfg, &pairs).unwrap();
        let b = train(&cfg, &pairs).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.train_loss, b.train_loss);
    }

    #[test]
    fn small_learning_rate_loss_is_non_increasing() {
        let t = generate_synthetic(&SyntheticSpec::periodic(3, 120, 1)).unwrap();
        let pairs = build_nn_pairs(&t, 3, 4).unwrap();
        let refs: Vec<&NnPair> = pairs.iter().collect();
        let cfg = MlpConfig {
            learning_rate: 1e-4,
            ..small(3, 4, vec![8, 8])
        };
        let mut model = MlpModel::init(&cfg).unwrap();
        let n_params: usize = model.layers().iter().map(|l| l.weights.len() + l.bias.len()).sum();
        let mut adam = Adam::new(cfg.learning_rate, n_params);
        let mut delta = vec![0.0; n_params];
        let mut prev = model.mse(&refs);
        for _ in 0..50 {
            let (_, g) = model.loss_and_grad(&refs);
            adam.delta(&flatten(&g), &mut delta);
            apply(&mut model, &delta);
            let now = model.mse(&refs);
            assert!(now <= prev + 1e-12, "{now} > {prev}");
            prev = now;
        }
    }

    #[test]
    fn horizon_limit_is_enforced() {
        let m = MlpModel::init(&small(3, 6, vec![4])).unwrap();
        assert!(matches!(
            predict_nn(&m, &[1, 0, 1], 7),
            Err(Error::HorizonOutOfRange { horizon: 7, max: 6 })
        ));
        assert!(predict_nn(&m, &[1, 0, 1], 0).is_err());
        for h in 1..=6 {
            let p = predict_nn(&m, &[1, 0, 1], h).unwrap();
            assert!((0.0..=1.0).contains(&p.prob));
        }
        assert!(predict_nn(&m, &[1, 0], 1).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let m = MlpModel::init(&small(5, 3, vec![7, 4])).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path()).unwrap();
        assert_eq!(MlpModel::load(f.path()).unwrap(), m);
    }
}
