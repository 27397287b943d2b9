//! Loss weighting, Adam optimization, and the two training loops.

mod adam;
mod loops;
mod weights;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loops::{train_clsnet, train_segnet, write_loss_history, ClsTrainSettings, SegTrainSettings};
pub use weights::{class_weights, pixel_label_frequencies, sample_label_frequencies, WeightExponent};

/// Step-count schedule of one training run. Epochs are step-count defined:
/// every batch is drawn uniformly with replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
}

impl TrainConfig {
    /// Segmentation schedule: batch 10, 100 batches/epoch, 20 epochs.
    pub fn seg() -> Self {
        TrainConfig { batch_size: 10, batches_per_epoch: 100, epochs: 20 }
    }

    /// Classification schedule: batch 10, 10 batches/epoch, 20 epochs.
    pub fn cls() -> Self {
        TrainConfig { batch_size: 10, batches_per_epoch: 10, epochs: 20 }
    }

    pub fn total_steps(&self) -> usize {
        self.batches_per_epoch * self.epochs
    }
}
