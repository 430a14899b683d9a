use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::{Adam, Mlp, NeuralError, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub net: Mlp<T>,
    pub adam: Adam<T>,
    pub rng: ChaCha8Rng,
    pub epoch: u64,
    pub best_val_loss: f64,
    pub history: Vec<EpochLog>,
}

impl<T: Real> TrainState<T> {
    /// Xavier initialization from `seed`; the same RNG later shuffles minibatches.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::xavier(widths, &mut rng)?;
        Ok(Self::from_net(net, rng))
    }

    pub fn from_net(net: Mlp<T>, rng: ChaCha8Rng) -> Self {
        let adam = Adam::new(net.param_count());
        Self { net, adam, rng, epoch: 0, best_val_loss: f64::INFINITY, history: Vec::new() }
    }

    /// Bitwise equality, including RNG position and loss history.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let bits = |v: &[T]| v.iter().map(|x| x.as_f64().to_bits()).collect::<Vec<_>>();
        let hist = |h: &[EpochLog]| h.iter().map(|e| (e.train_loss.to_bits(), e.val_loss.map(f64::to_bits))).collect::<Vec<_>>();
        self.net.widths() == other.net.widths()
            && self.net.activations() == other.net.activations()
            && bits(self.net.params()) == bits(other.net.params())
            && bits(&self.adam.m) == bits(&other.adam.m)
            && bits(&self.adam.v) == bits(&other.adam.v)
            && self.adam.step == other.adam.step
            && self.rng == other.rng
            && self.epoch == other.epoch
            && self.best_val_loss.to_bits() == other.best_val_loss.to_bits()
            && hist(&self.history) == hist(&other.history)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Total epochs; training resumes from the state's epoch up to this count.
    pub epochs: u64,
    pub lr: f64,
    /// Learning rate multiplier reached at the last epoch (exponential decay; 1 = constant).
    #[serde(default = "one")]
    pub lr_final_factor: f64,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Checkpoint period in epochs; 0 writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5000, lr: 1e-3, lr_final_factor: 1.0, batch_size: None, checkpoint_every: 0 }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: u64) -> f64 {
        if self.epochs == 0 || self.lr_final_factor == 1.0 {
            return self.lr;
        }
        self.lr * self.lr_final_factor.powf(epoch as f64 / self.epochs as f64)
    }
}

/// One network plus its data.
pub struct TrainTask<T> {
    pub state: TrainState<T>,
    pub x: Matrix<T>,
    pub y: Matrix<T>,
    pub validation: Option<(Matrix<T>, Matrix<T>)>,
}

impl<T: Real> TrainTask<T> {
    fn run_epoch(&mut self, cfg: &TrainConfig, task_idx: usize) -> Result<()> {
        let lr = cfg.lr_at(self.state.epoch);
        let n = self.x.rows();
        let train_loss = match cfg.batch_size {
            Some(bs) if bs < n => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut self.state.rng);
                let mut total = 0.0;
                for chunk in order.chunks(bs.max(1)) {
                    let (loss, grad) = self.state.net.backward(&self.x.select_rows(chunk), &self.y.select_rows(chunk))?;
                    self.state.adam.update(self.state.net.params_mut(), &grad, lr);
                    total += loss * chunk.len() as f64;
                }
                total / n as f64
            }
            _ => {
                let (loss, grad) = self.state.net.backward(&self.x, &self.y)?;
                self.state.adam.update(self.state.net.params_mut(), &grad, lr);
                loss
            }
        };
        let val_loss = match &self.validation {
            Some((vx, vy)) if vx.rows() > 0 => Some(self.state.net.loss(vx, vy)?),
            _ => None,
        };
        let epoch = self.state.epoch;
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) || !self.state.net.is_finite() {
            return Err(NeuralError::Diverged { task: task_idx, epoch });
        }
        if let Some(v) = val_loss {
            self.state.best_val_loss = self.state.best_val_loss.min(v);
        }
        self.state.history.push(EpochLog { train_loss, val_loss });
        self.state.epoch += 1;
        Ok(())
    }
}

/// Trains every task up to `cfg.epochs`, interleaving them epoch by epoch so a
/// shared checkpoint always holds a consistent snapshot. A divergent epoch
/// aborts without touching the last written checkpoint.
pub fn train<T: Real>(tasks: &mut [TrainTask<T>], cfg: &TrainConfig, checkpoint: Option<&Path>) -> Result<()> {
    let Some(start) = tasks.first().map(|t| t.state.epoch) else {
        return Ok(());
    };
    if tasks.iter().any(|t| t.state.epoch != start) {
        return Err(NeuralError::Shape("tasks are at different epochs".into()));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.x.rows() == 0 {
            return Err(NeuralError::Shape(format!("task {i} has an empty training split")));
        }
        if t.x.rows() != t.y.rows() {
            return Err(NeuralError::Shape(format!("task {i}: {} inputs vs {} targets", t.x.rows(), t.y.rows())));
        }
    }
    for epoch in start..cfg.epochs {
        for (i, t) in tasks.iter_mut().enumerate() {
            t.run_epoch(cfg, i)?;
        }
        let done = epoch + 1;
        if done % 500 == 0 || done == cfg.epochs {
            let losses: Vec<String> = tasks.iter().map(|t| format!("{:.3e}", t.state.history.last().unwrap().train_loss)).collect();
            log::info!("epoch {done}/{}: train loss {}", cfg.epochs, losses.join(" "));
        }
        if let Some(path) = checkpoint {
            if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || done == cfg.epochs {
                save_checkpoint(&states(tasks), path)?;
            }
        }
    }
    Ok(())
}

fn states<T: Clone>(tasks: &[TrainTask<T>]) -> Vec<TrainState<T>> {
    tasks.iter().map(|t| t.state.clone()).collect()
}
