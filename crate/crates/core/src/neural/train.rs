use ndarray::{ArrayD, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;

use super::{NeuralError, NeuralNet};
use crate::seed;

/// Mini-batch Adam settings. Defaults: 5 epochs of batch 128, learning rate
/// 1e-3, betas 0.9 / 0.999, epsilon 1e-8, no gradient clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescales each batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Drives batch shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Sample-weighted mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

struct AdamSlot {
    m: ArrayD<f64>,
    v: ArrayD<f64>,
}

impl NeuralNet {
    /// Trains in place. Frozen layers are neither read for gradients nor
    /// written; their Adam state is never allocated.
    pub fn train(
        &mut self,
        x: ArrayView2<f64>,
        labels: &[usize],
        cfg: &TrainConfig,
    ) -> Result<TrainReport, NeuralError> {
        if x.nrows() == 0 {
            return Err(NeuralError::EmptyData);
        }
        if x.nrows() != labels.len() {
            return Err(NeuralError::LabelCount { rows: x.nrows(), labels: labels.len() });
        }
        if cfg.batch_size == 0 {
            return Err(NeuralError::Invalid("batch_size must be positive".into()));
        }
        labels.iter().try_for_each(|&l| self.head().check_label(l))?;
        let data = self.prepare(x)?;

        let mut slots: Vec<Option<Vec<AdamSlot>>> = self
            .layers()
            .iter()
            .map(|l| {
                (l.spec.has_weights() && !l.frozen).then(|| {
                    l.params
                        .iter()
                        .map(|p| AdamSlot { m: ArrayD::zeros(p.raw_dim()), v: ArrayD::zeros(p.raw_dim()) })
                        .collect()
                })
            })
            .collect();
        let mut report = TrainReport { epoch_losses: Vec::with_capacity(cfg.epochs), steps: 0 };
        if slots.iter().all(Option::is_none) {
            return Ok(report);
        }

        let mut rng = seed::rng(cfg.seed);
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let mut step = 0i32;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
                let xb = data.select(Axis(0), idx);
                let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let (loss, mut grads) = self.loss_and_grads_prepared(xb, &yb, Some(&mut rng));
                if !loss.is_finite() {
                    return Err(NeuralError::NonFiniteLoss { epoch, batch });
                }
                if let Some(max) = cfg.clip_norm {
                    let sq: f64 = grads.per_layer.iter().flatten().flatten().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum();
                    let norm = sq.sqrt();
                    if norm > max {
                        grads.per_layer.iter_mut().flatten().flatten().for_each(|g| *g *= max / norm);
                    }
                }
                total += loss * idx.len() as f64;
                step += 1;
                let lr_t = cfg.learning_rate * (1.0 - cfg.beta2.powi(step)).sqrt() / (1.0 - cfg.beta1.powi(step));
                for ((layer, slot), grad) in self.layers_mut().iter_mut().zip(&mut slots).zip(grads.per_layer) {
                    let (Some(slot), Some(grad)) = (slot.as_mut(), grad) else {
                        continue;
                    };
                    for ((p, s), g) in layer.params.iter_mut().zip(slot.iter_mut()).zip(grad) {
                        Zip::from(p).and(&mut s.m).and(&mut s.v).and(&g).for_each(|p, m, v, &g| {
                            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                            *p -= lr_t * *m / (v.sqrt() + cfg.epsilon);
                        });
                    }
                }
            }
            report.epoch_losses.push(total / data.nrows() as f64);
        }
        report.steps = step as usize;
        Ok(report)
    }
}
