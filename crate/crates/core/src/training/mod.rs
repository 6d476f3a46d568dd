//! Joint SED/DOA training: loss, Adam, early stopping and checkpoints.

mod adam;
mod checkpoint;
mod data;
mod fit;
mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{clip_grad_norm, grad_norm, Adam, AdamConfig, Moments};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use data::{
    default_normalization, load_examples, make_batch, output_frame_times, prepare_example, Batch,
    Example,
};
pub use fit::{evaluate, fit, fit_with, predict, EpochRecord, FitResult, History, HISTORY_COLUMNS};
pub use loss::{seld_loss, seld_loss_grad, LossGrad, LossOptions, LossTerms, BCE_EPS};

/// How `patience` interacts with `min_epochs`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Patience counts from the start; stopping is only allowed once
    /// `min_epochs` have run.
    #[default]
    Floor,
    /// Patience only starts counting after `min_epochs`.
    AfterFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub stop_rule: StopRule,
    /// Required drop in validation G-SELD for an epoch to count as better.
    pub min_delta: f64,
    pub doa_loss_weight: f64,
    pub masked_doa: bool,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub shuffle: bool,
    /// Return the best-validation parameters rather than the last ones.
    pub restore_best: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
            max_epochs: 3000,
            min_epochs: 1000,
            patience: 300,
            stop_rule: StopRule::Floor,
            min_delta: 1e-5,
            doa_loss_weight: 5.0,
            masked_doa: false,
            grad_clip: None,
            shuffle: true,
            restore_best: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Clipping threshold used when clipping is switched on without a value.
    pub const DEFAULT_CLIP: f64 = 5.0;

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn loss(&self) -> LossOptions {
        LossOptions {
            doa_weight: self.doa_loss_weight,
            masked_doa: self.masked_doa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be finite and non-negative", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps {} must be positive", self.eps));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive".into());
        }
        if !(self.min_delta >= 0.0) || !(self.doa_loss_weight >= 0.0) {
            return bad("min_delta and doa_loss_weight must be non-negative".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip {c} must be positive"));
            }
        }
        Ok(())
    }

    /// Whether training should end after `epoch` (1-based), given the
    /// epoch of the best validation score so far.
    pub fn should_stop(&self, epoch: usize, best_epoch: usize) -> bool {
        if epoch >= self.max_epochs {
            return true;
        }
        if epoch < self.min_epochs {
            return false;
        }
        let since = match self.stop_rule {
            StopRule::Floor => epoch - best_epoch,
            StopRule::AfterFloor => epoch - best_epoch.max(self.min_epochs),
        };
        since >= self.patience
    }
}
