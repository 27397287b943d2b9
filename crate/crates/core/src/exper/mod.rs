//! Experiment harness: patient-grouped fold partitions, the unbalanced
//! classification sweep, and mode comparison reports.

mod segcv;
mod split;
mod sweep;

pub use segcv::{eval_segnet_dice, seg_cross_validation, summarize_dice, DiceRow, SegCvConfig, SegCvResult};
pub use split::{make_split_plan, partition_patients, SplitPlan};
pub use sweep::{compare_modes, evaluate_cls, run_sweep, ModeComparison, PredictionRow, SweepKey, SweepOutcome};

use crate::net::{ClsnetSpec, FeatureMode};
use crate::train::{AdamConfig, TrainConfig};

/// Knobs of the classification sweep.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Segnet base channels of the feature source (descriptive; the actual
    /// source is the checkpoint handed to the sweep).
    pub n: usize,
    pub levels: usize,
    pub num_labels: usize,
    /// Patient folds; the classifier uses the test patients of
    /// `feature_fold`.
    pub folds: usize,
    pub feature_fold: usize,
    pub modes: Vec<FeatureMode>,
    pub n_pos: Vec<usize>,
    pub repetitions: usize,
    pub cls_widths: ClsnetSpec,
    pub cls_train: TrainConfig,
    pub adam: AdamConfig,
    /// Parallel independent trainings; 1 = serial.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn desk(master_seed: u64, input_size: usize) -> Self {
        ExperimentConfig {
            master_seed,
            n: 8,
            levels: 4,
            num_labels: crate::phantom::NUM_LABELS,
            folds: 4,
            feature_fold: 0,
            modes: FeatureMode::ALL.to_vec(),
            n_pos: (1..=10).collect(),
            repetitions: 10,
            cls_widths: ClsnetSpec::desk(1, input_size),
            cls_train: TrainConfig::cls(),
            adam: AdamConfig::default(),
            jobs: 1,
        }
    }
}
