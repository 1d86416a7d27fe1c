use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AEModel, Weights};
use crate::error::{Error, Result};

/// Any weight beyond this magnitude is treated as divergence.
const MAX_WEIGHT: f64 = 1e6;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Epochs without a new best training loss before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

struct Adam {
    m: Weights,
    v: Weights,
    step: i32,
}

impl Adam {
    fn apply(&mut self, weights: &mut Weights, grad: &Weights, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step);
        let params = weights.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((w, g), m), v) in params.into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
            let g = g.data();
            let m = m.data_mut();
            let v = v.data_mut();
            for (i, w) in w.data_mut().iter_mut().enumerate() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                *w -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn mean_loss(model: &AEModel, data: &[Vec<f64>]) -> f64 {
    data.iter()
        .map(|x| model.reconstruction_error(x).expect("shape checked"))
        .sum::<f64>()
        / data.len() as f64
}

/// Minibatch training on reconstruction loss.
///
/// Returns the parameters with the lowest full-data loss seen (the initial
/// weights included, so the loss never ends above where it started) and the
/// per-sample reconstruction errors under those parameters.
pub fn fit(model: &AEModel, data: &[Vec<f64>], cfg: &TrainConfig) -> Result<(AEModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    cfg.validate()?;
    model.validate()?;
    if let Some(bad) = data.iter().find(|x| x.len() != model.architecture.input_len) {
        return Err(Error::ShapeMismatch {
            expected: model.architecture.input_len,
            actual: bad.len(),
        });
    }

    let mut current = model.clone();
    let mut best_loss = mean_loss(&current, data);
    let mut best = current.weights.clone();
    let mut stale = 0;
    let mut adam = Adam {
        m: Weights::zeros(&model.architecture),
        v: Weights::zeros(&model.architecture),
        step: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = Weights::zeros(&model.architecture);
            for &i in batch {
                let x = &data[i];
                let t = current.run(x);
                current.backward(x, &t, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => {
                    for t in grad.tensors_mut() {
                        t.data_mut().iter_mut().for_each(|g| *g *= scale);
                    }
                    adam.apply(&mut current.weights, &grad, cfg.learning_rate);
                }
                Optimizer::Sgd => current.weights.add_scaled(&grad, -cfg.learning_rate * scale),
            }
            if let Some(w) = current
                .weights
                .values()
                .find(|w| !w.is_finite() || w.abs() > MAX_WEIGHT)
            {
                return Err(Error::DivergedLoss {
                    epoch,
                    reason: format!("weight reached {w:e}"),
                });
            }
        }
        let loss = mean_loss(&current, data);
        if !loss.is_finite() {
            return Err(Error::DivergedLoss {
                epoch,
                reason: format!("loss is {loss}"),
            });
        }
        log::debug!("epoch {epoch}: loss {loss:.6e}");
        if loss < best_loss {
            best_loss = loss;
            best = current.weights.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::debug!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    current.weights = best;
    let errors = data
        .iter()
        .map(|x| current.reconstruction_error(x))
        .collect::<Result<Vec<f64>>>()?;
    Ok((current, errors))
}
