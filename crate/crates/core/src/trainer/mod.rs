//! Training loop: jittered windows, modality dropout, AdamW with warmup and
//! cosine decay, early stopping on validation Pearson and stochastic weight
//! averaging of end-of-epoch weights.

mod dropout;
mod loss;
mod optimizer;
mod schedule;
mod swa;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TribeError};

pub use dropout::{sample_mask_for, sample_modality_mask};
pub use loss::{compute_loss, LossKind, HUBER_DELTA};
pub use optimizer::AdamW;
pub use schedule::{lr_at, warmup_steps};
pub use swa::SwaAccumulator;
pub(crate) use train::write_json;
pub use train::{
    train, train_observed, write_training_run, EpochEnd, EpochLog, TrainOutcome, TrainState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_peak: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub modality_dropout_p: f64,
    /// 1-based epoch whose end-of-epoch weights are the first folded into
    /// the average.
    pub swa_start_epoch: usize,
    pub early_stop_patience: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 16,
            lr_peak: 1e-4,
            warmup_fraction: 0.1,
            weight_decay: 0.0,
            modality_dropout_p: 0.2,
            swa_start_epoch: 8,
            early_stop_patience: 3,
            loss: LossKind::Mse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TribeError::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.modality_dropout_p) {
            return bad(format!(
                "modality_dropout_p {} outside [0, 1)",
                self.modality_dropout_p
            ));
        }
        if self.swa_start_epoch < 1 || self.swa_start_epoch > self.epochs {
            return bad(format!(
                "swa_start_epoch {} outside [1, {}]",
                self.swa_start_epoch, self.epochs
            ));
        }
        if !(self.lr_peak > 0.0 && self.lr_peak.is_finite()) {
            return bad(format!("lr_peak {} must be positive", self.lr_peak));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative".into());
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive".into());
        }
        Ok(())
    }
}
