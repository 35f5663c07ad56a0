use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Warmup then step decay of the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 100,
            base_lr: 1e-3,
            warmup_epochs: 10,
            decay_every: 10,
            decay_factor: 0.9,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("epochs, batch size and decay interval must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.base_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay factor {} outside (0, 1]", self.decay_factor)));
        }
        Ok(())
    }

    /// Learning rate of `epoch`: a linear ramp reaching `base_lr` at the last
    /// warmup epoch, then multiplied by `decay_factor` every `decay_every` epochs.
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.epochs {
            return Err(Error::Param(format!("epoch {epoch} outside 0..{}", self.epochs)));
        }
        if epoch < self.warmup_epochs {
            return Ok(self.base_lr * (epoch + 1) as f64 / self.warmup_epochs as f64);
        }
        let steps = (epoch - self.warmup_epochs) / self.decay_every;
        Ok(self.base_lr * self.decay_factor.powi(steps as i32))
    }
}
