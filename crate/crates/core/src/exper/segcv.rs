//! Four-fold segmentation cross-validation with the channel study.

use rayon::prelude::*;

use super::partition_patients;
use crate::metrics::{dice, mean_std};
use crate::net::{segnet_infer, Checkpoint};
use crate::phantom::{Corpus, LabeledSample, LABEL_NAMES};
use crate::rng::child_seed;
use crate::train::{train_segnet, AdamConfig, SegTrainSettings, TrainConfig};
use crate::tensor::{Result, TensorError};

#[derive(Debug, Clone)]
pub struct SegCvConfig {
    pub master_seed: u64,
    pub folds: usize,
    /// Base channel counts to study, e.g. `[8, 16, 32, 64]`.
    pub n_values: Vec<usize>,
    pub levels: usize,
    pub num_labels: usize,
    pub train: TrainConfig,
    pub adam: AdamConfig,
    pub jobs: usize,
}

impl SegCvConfig {
    pub fn desk(master_seed: u64) -> Self {
        SegCvConfig {
            master_seed,
            folds: 4,
            n_values: vec![8],
            levels: 4,
            num_labels: crate::phantom::NUM_LABELS,
            train: TrainConfig::seg(),
            adam: AdamConfig::segmentation(),
            jobs: 1,
        }
    }
}

/// Mean Dice of one label over one fold's held-out slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceRow {
    pub fold: usize,
    pub n: usize,
    pub label: String,
    pub dice: f64,
}

pub struct SegCvResult {
    pub rows: Vec<DiceRow>,
    /// One trained checkpoint per `(fold, n)` job, same order as the jobs.
    pub checkpoints: Vec<(usize, usize, Checkpoint)>,
    /// Per-epoch loss history per job.
    pub histories: Vec<(usize, usize, Vec<f64>)>,
}

/// Per-label mean Dice of a checkpoint over labeled samples.
pub fn eval_segnet_dice(ckpt: &Checkpoint, samples: &[&LabeledSample], num_labels: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(TensorError::Usage("eval_segnet_dice: no samples".into()));
    }
    let mut sums = vec![0.0f64; num_labels];
    for sample in samples {
        let truth = sample
            .label_map
            .as_ref()
            .ok_or_else(|| TensorError::Usage(format!("sample {} has no label map", sample.id)))?;
        let pred = segnet_infer(ckpt, &sample.image)?.label_map;
        for (label, sum) in sums.iter_mut().enumerate() {
            *sum += dice(&pred, truth, label as u8)?;
        }
    }
    Ok(sums.into_iter().map(|s| s / samples.len() as f64).collect())
}

/// Train one segnet per `(fold, n)` on the other folds' patients and report
/// per-label Dice on the held-out patients.
pub fn seg_cross_validation(corpus: &Corpus, cfg: &SegCvConfig) -> Result<SegCvResult> {
    let patients = corpus.patients();
    if patients.len() < cfg.folds {
        return Err(TensorError::Usage(format!(
            "{} patients cannot form {} folds",
            patients.len(),
            cfg.folds
        )));
    }
    let folds = partition_patients(&patients, cfg.folds, cfg.master_seed);

    let jobs: Vec<(usize, usize)> = (0..cfg.folds)
        .flat_map(|fold| cfg.n_values.iter().map(move |&n| (fold, n)))
        .collect();

    let run_one = |&(fold, n): &(usize, usize)| -> Result<(Vec<DiceRow>, (usize, usize, Checkpoint), (usize, usize, Vec<f64>))> {
        let test_patients = &folds[fold];
        let train_samples: Vec<&LabeledSample> = corpus
            .normals()
            .filter(|s| !test_patients.contains(&s.patient_id))
            .collect();
        let test_samples: Vec<&LabeledSample> = corpus
            .normals()
            .filter(|s| test_patients.contains(&s.patient_id))
            .collect();
        let settings = SegTrainSettings {
            n,
            levels: cfg.levels,
            num_labels: cfg.num_labels,
            config: cfg.train,
            adam: cfg.adam,
        };
        let seed = child_seed(cfg.master_seed, "seg-fold", &[fold as u64, n as u64]);
        let (ckpt, history) = train_segnet(&settings, &train_samples, seed)?;
        let per_label = eval_segnet_dice(&ckpt, &test_samples, cfg.num_labels)?;
        let rows = per_label
            .into_iter()
            .enumerate()
            .map(|(label, d)| DiceRow {
                fold,
                n,
                label: LABEL_NAMES[label].to_string(),
                dice: d,
            })
            .collect();
        Ok((rows, (fold, n, ckpt), (fold, n, history)))
    };

    let results: Vec<_> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| TensorError::Usage(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run_one).collect::<Result<Vec<_>>>())?
    } else {
        jobs.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };

    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    let mut histories = Vec::new();
    for (r, c, h) in results {
        rows.extend(r);
        checkpoints.push(c);
        histories.push(h);
    }
    Ok(SegCvResult { rows, checkpoints, histories })
}

/// Mean +/- std across folds per `(n, label)`.
pub fn summarize_dice(rows: &[DiceRow]) -> Vec<(usize, String, f64, f64)> {
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<f64>> = std::collections::BTreeMap::new();
    for row in rows {
        let label_idx = LABEL_NAMES.iter().position(|&l| l == row.label).unwrap_or(usize::MAX);
        groups.entry((row.n, label_idx)).or_default().push(row.dice);
    }
    groups
        .into_iter()
        .map(|((n, label_idx), values)| {
            let (mean, std) = mean_std(&values);
            let label = LABEL_NAMES.get(label_idx).copied().unwrap_or("?").to_string();
            (n, label, mean, std)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_patient, PhantomProfile};

    #[test]
    fn cross_validation_on_a_tiny_corpus() {
        let profile = PhantomProfile {
            size: 32,
            patients: 4,
            slices_min: 2,
            slices_max: 2,
            positives_per_disease: 0,
            noise_sigma: 0.03,
        };
        let mut samples = Vec::new();
        for p in 0..4 {
            samples.extend(generate_patient(88, p, &profile));
        }
        let corpus = Corpus::from_samples(samples);
        let cfg = SegCvConfig {
            master_seed: 1,
            folds: 2,
            n_values: vec![2],
            levels: 2,
            num_labels: 6,
            train: TrainConfig { batch_size: 2, batches_per_epoch: 3, epochs: 2 },
            adam: AdamConfig::default(),
            jobs: 2,
        };
        let result = seg_cross_validation(&corpus, &cfg).unwrap();
        // 2 folds x 1 n x 6 labels.
        assert_eq!(result.rows.len(), 12);
        assert_eq!(result.checkpoints.len(), 2);
        assert!(result.rows.iter().all(|r| (0.0..=1.0).contains(&r.dice)));
        let summary = summarize_dice(&result.rows);
        assert_eq!(summary.len(), 6);
        // Deterministic across runs, including with a thread pool.
        let again = seg_cross_validation(&corpus, &cfg).unwrap();
        assert_eq!(result.rows, again.rows);
    }
}
