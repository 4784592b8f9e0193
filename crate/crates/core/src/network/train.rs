use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::{backward, forward_trace};
use super::{Layer, Network};
use crate::data::{Dataset, Tensor};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub layer: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Cross-entropy loss of one sample and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradients {
    pub loss: f64,
    pub probabilities: Vec<f64>,
    pub params: Vec<ParamGrad>,
    pub input: Vec<f64>,
}

impl Network {
    fn check_label(&self, label: usize) -> Result<()> {
        let k = self.class_count();
        if label >= k {
            return Err(Error::Parameter(format!("label {label} outside [0, {k})")));
        }
        Ok(())
    }

    /// Softmax cross-entropy of a single sample.
    pub fn loss(&self, input: &[f64], label: usize) -> Result<f64> {
        self.check_label(label)?;
        let shapes = self.layer_shapes()?;
        let trace = forward_trace(self.layers(), &shapes, input);
        Ok(cross_entropy(&trace[trace.len() - 2], label))
    }

    pub fn sample_gradients(&self, input: &[f64], label: usize) -> Result<SampleGradients> {
        self.check_label(label)?;
        if input.len() != self.input_shape().len() {
            return Err(Error::shape(
                "sample_gradients",
                format!("network input {}", self.input_shape()),
                format!("{} values", input.len()),
            ));
        }
        let shapes = self.layer_shapes()?;
        let trace = forward_trace(self.layers(), &shapes, input);
        let logits = &trace[trace.len() - 2];
        let probabilities = trace[trace.len() - 1].clone();
        let mut delta = probabilities.clone();
        delta[label] -= 1.0;
        let (grads, input_grad) = backward(self.layers(), &shapes, &trace, delta);
        let params = grads
            .into_iter()
            .enumerate()
            .filter_map(|(layer, g)| g.map(|(weights, bias)| ParamGrad { layer, weights, bias }))
            .collect();
        Ok(SampleGradients {
            loss: cross_entropy(logits, label),
            probabilities,
            params,
            input: input_grad,
        })
    }
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch SGD with momentum on softmax cross-entropy. Each epoch visits
/// the samples in a seeded shuffled order.
pub fn train_sgd(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    if data.shape() != net.input_shape() {
        return Err(Error::shape(
            "train_sgd",
            format!("network input {}", net.input_shape()),
            format!("dataset {}", data.shape()),
        ));
    }
    let k = net.class_count();
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= k) {
        return Err(Error::Parameter(format!("label {bad} outside [0, {k})")));
    }

    let mut velocity: Vec<Option<(Vec<f64>, Vec<f64>)>> = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Conv2d(c) => Some((vec![0.0; c.weights.len()], vec![0.0; c.bias.len()])),
            Layer::Dense(d) => Some((vec![0.0; d.weights.len()], vec![0.0; d.bias.len()])),
            _ => None,
        })
        .collect();

    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(seed::derive(
            cfg.seed,
            seed::stage::SHUFFLE,
            epoch as u64,
        )));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Option<(Vec<f64>, Vec<f64>)>> = velocity
                .iter()
                .map(|v| v.as_ref().map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()])))
                .collect();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let g = net.sample_gradients(data.images.sample(i), data.labels[i])?;
                batch_loss += g.loss;
                if argmax(&g.probabilities) == data.labels[i] {
                    correct += 1;
                }
                for p in g.params {
                    let (aw, ab) = acc[p.layer].as_mut().expect("weighted layer");
                    aw.iter_mut().zip(&p.weights).for_each(|(a, v)| *a += v);
                    ab.iter_mut().zip(&p.bias).for_each(|(a, v)| *a += v);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / chunk.len() as f64;
            for ((layer, vel), grad) in net.layers_mut().iter_mut().zip(&mut velocity).zip(&acc) {
                let (Some((vw, vb)), Some((gw, gb))) = (vel.as_mut(), grad.as_ref()) else {
                    continue;
                };
                let (w, b) = match layer {
                    Layer::Conv2d(c) => (&mut c.weights, &mut c.bias),
                    Layer::Dense(d) => (&mut d.weights, &mut d.bias),
                    _ => continue,
                };
                step(w, vw, gw, scale, cfg);
                step(b, vb, gb, scale, cfg);
            }
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(log)
}

fn step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], scale: f64, cfg: &TrainConfig) {
    if cfg.learning_rate == 0.0 {
        return;
    }
    for ((p, v), g) in params.iter_mut().zip(velocity).zip(grad) {
        *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
        *p += *v;
    }
}

/// Fraction of samples whose most probable class equals the label.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64> {
    evaluate_batched(net, data, 256)
}

pub fn evaluate_batched(net: &Network, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData("evaluation set is empty".into()));
    }
    let batch_size = batch_size.max(1);
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let batch: Tensor = data.images.select(chunk);
        let probs = net.forward(&batch)?;
        for (r, &i) in chunk.iter().enumerate() {
            if argmax(probs.row(r)) == data.labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, ImageShape};

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let shape = ImageShape::new(1, 8, 8);
        let mut net = Network::plain_cnn(shape, &[3, 4], 3, 1).unwrap();
        let before = net.clone();
        let ds = synthetic(20, 3, shape, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        train_sgd(&mut net, &ds, &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn loss_falls_on_separable_data() {
        let shape = ImageShape::new(1, 8, 8);
        let mut net = Network::plain_cnn(shape, &[4, 4], 2, 3).unwrap();
        let ds = synthetic(50, 2, shape, 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.02,
            epochs: 10,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let log = train_sgd(&mut net, &ds, &cfg).unwrap();
        let first = log.epochs[0].loss;
        let last = log.final_loss().unwrap();
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn divergence_is_reported() {
        let shape = ImageShape::new(1, 8, 8);
        let mut net = Network::plain_cnn(shape, &[4], 2, 3).unwrap();
        let ds = synthetic(40, 2, shape, 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            epochs: 5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train_sgd(&mut net, &ds, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn config_checks() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let neg = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn accuracy_extremes_and_batch_invariance() {
        let shape = ImageShape::new(1, 8, 8);
        let net = Network::plain_cnn(shape, &[4], 3, 5).unwrap();
        let mut ds = synthetic(30, 3, shape, 6).unwrap();
        let probs = net.forward(&ds.images).unwrap();
        let preds: Vec<usize> = (0..ds.len()).map(|r| argmax(probs.row(r))).collect();

        ds.labels = preds.clone();
        assert_eq!(evaluate(&net, &ds).unwrap(), 1.0);
        ds.labels = preds.iter().map(|p| (p + 1) % 3).collect();
        assert_eq!(evaluate(&net, &ds).unwrap(), 0.0);

        let mut mixed = ds.clone();
        mixed.labels = (0..30).map(|i| i % 3).collect();
        let a = evaluate_batched(&net, &mixed, 1).unwrap();
        let b = evaluate_batched(&net, &mixed, 7).unwrap();
        let c = evaluate_batched(&net, &mixed, 1000).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
}
