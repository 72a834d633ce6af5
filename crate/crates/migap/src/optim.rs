//! Adam with bias correction, an EMA shadow of the weights, and a
//! reduce-on-plateau learning rate schedule.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub ema_decay: f64,
    /// Plateau patience measured in epochs (an epoch is a fixed count of
    /// optimizer steps, see the training loop).
    pub plateau_patience: usize,
    pub plateau_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-3,
            betas: (0.9, 0.999),
            ema_decay: 0.999,
            plateau_patience: 200,
            plateau_factor: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("betas must lie in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config("ema_decay must lie in [0,1)".into()));
        }
        if self.plateau_factor >= 1.0 || self.plateau_factor <= 0.0 {
            return Err(Error::Config("plateau_factor must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Denoiser weights plus everything needed to resume or replay training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelState {
    pub weights: Vec<f64>,
    pub ema_weights: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: usize,
    pub lr: f64,
}

impl ModelState {
    pub fn new(weights: Vec<f64>, lr: f64) -> Self {
        let n = weights.len();
        ModelState {
            ema_weights: weights.clone(),
            weights,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            lr,
        }
    }
}

/// One bias-corrected Adam update followed by the EMA shadow update.
pub fn adam_step(state: &mut ModelState, grad: &[f64], opt: &OptimizerConfig) -> Result<()> {
    if grad.len() != state.weights.len() {
        return Err(Error::Config("gradient length mismatch".into()));
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::Numeric {
            step: state.step,
            msg: "non-finite gradient".into(),
        });
    }
    let (b1, b2) = opt.betas;
    let t = (state.step + 1) as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for i in 0..grad.len() {
        let g = grad[i];
        state.adam_m[i] = b1 * state.adam_m[i] + (1.0 - b1) * g;
        state.adam_v[i] = b2 * state.adam_v[i] + (1.0 - b2) * g * g;
        let m_hat = state.adam_m[i] / bc1;
        let v_hat = state.adam_v[i] / bc2;
        state.weights[i] -= state.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    for i in 0..grad.len() {
        state.ema_weights[i] =
            opt.ema_decay * state.ema_weights[i] + (1.0 - opt.ema_decay) * state.weights[i];
    }
    state.step += 1;
    Ok(())
}

/// Halves (by `factor`) the learning rate after `patience` consecutive epochs
/// without strict improvement of the epoch loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauScheduler {
    patience: usize,
    factor: f64,
    best: f64,
    epochs_since_best: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            best: f64::INFINITY,
            epochs_since_best: 0,
        }
    }

    /// Feeds one epoch loss and returns the (possibly reduced) learning rate.
    pub fn update(&mut self, epoch_loss: f64, lr: f64) -> f64 {
        if epoch_loss < self.best {
            self.best = epoch_loss;
            self.epochs_since_best = 0;
            return lr;
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best >= self.patience {
            self.epochs_since_best = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}
