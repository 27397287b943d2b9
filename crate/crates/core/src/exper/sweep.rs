//! The unbalanced classification sweep: for every disease, feature mode,
//! positive-sample count and repetition, train a fresh classifier and score
//! it on the held-out negatives and positives.

use std::collections::HashSet;

use rayon::prelude::*;

use super::{make_split_plan, ExperimentConfig};
use crate::metrics::{cohens_kappa, confusion, MetricsRecord};
use crate::net::{assemble_features, clsnet_predict, Checkpoint, FeatureMode, SegFeatureBank};
use crate::phantom::{Corpus, DiseaseKind, LabeledSample};
use crate::rng::child_seed;
use crate::train::{train_clsnet, ClsTrainSettings};
use crate::tensor::{Result, TensorError};

/// Identity of one sweep training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SweepKey {
    pub disease: DiseaseKind,
    pub mode: FeatureMode,
    pub n_pos: usize,
    pub repetition: usize,
}

impl std::fmt::Display for SweepKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_{}_{}_{}", self.disease, self.mode, self.n_pos, self.repetition)
    }
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub sample_id: String,
    pub truth: u8,
    pub pred: u8,
    pub p_pos: f32,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub key: SweepKey,
    pub record: MetricsRecord,
    pub predictions: Vec<PredictionRow>,
}

fn feature_for<'a>(
    mode: FeatureMode,
    sample: &LabeledSample,
    bank: Option<&'a SegFeatureBank>,
) -> Result<Option<&'a crate::net::SegFeatures>> {
    if !mode.needs_seg() {
        return Ok(None);
    }
    let bank = bank.ok_or_else(|| {
        TensorError::Usage(format!("feature mode {mode} requires a segmentation checkpoint"))
    })?;
    bank.get(&sample.id)
        .map(Some)
        .ok_or_else(|| TensorError::Usage(format!("no cached features for sample {}", sample.id)))
}

/// Score a trained classifier over samples; returns one row per sample.
pub fn evaluate_cls(
    ckpt: &Checkpoint,
    mode: FeatureMode,
    samples: &[&LabeledSample],
    bank: Option<&SegFeatureBank>,
) -> Result<Vec<PredictionRow>> {
    samples
        .iter()
        .map(|sample| {
            let features = assemble_features(mode, &sample.image, feature_for(mode, sample, bank)?)?;
            let (pred, p_pos) = clsnet_predict(ckpt, &features)?;
            Ok(PredictionRow {
                sample_id: sample.id.clone(),
                truth: sample.class_label() as u8,
                pred: pred as u8,
                p_pos,
            })
        })
        .collect()
}

fn lookup<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a LabeledSample> {
    corpus
        .find(id)
        .ok_or_else(|| TensorError::Usage(format!("sample {id} missing from corpus")))
}

fn run_one(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    bank: Option<&SegFeatureBank>,
    key: SweepKey,
) -> Result<SweepOutcome> {
    let plan = make_split_plan(cfg, corpus, key.disease, key.repetition)?;
    if key.n_pos == 0 || key.n_pos > plan.pos_pool.len() {
        return Err(TensorError::Usage(format!(
            "n_pos {} outside 1..={}",
            key.n_pos,
            plan.pos_pool.len()
        )));
    }
    let mut train_set: Vec<&LabeledSample> = Vec::new();
    for id in &plan.neg_train {
        train_set.push(lookup(corpus, id)?);
    }
    for id in &plan.pos_pool[..key.n_pos] {
        train_set.push(lookup(corpus, id)?);
    }

    let settings = ClsTrainSettings {
        mode: key.mode,
        widths: cfg.cls_widths.clone(),
        config: cfg.cls_train,
        adam: cfg.adam,
    };
    let mode_idx = FeatureMode::ALL.iter().position(|m| *m == key.mode).unwrap_or(0) as u64;
    let seed = child_seed(
        cfg.master_seed,
        "cls-train",
        &[key.disease.tag(), mode_idx, key.n_pos as u64, key.repetition as u64],
    );
    let (ckpt, _history) = train_clsnet(&settings, &train_set, bank, seed)?;

    let mut test_set: Vec<&LabeledSample> = Vec::new();
    for id in plan.neg_test.iter().chain(&plan.pos_test) {
        test_set.push(lookup(corpus, id)?);
    }
    let predictions = evaluate_cls(&ckpt, key.mode, &test_set, bank)?;
    let preds: Vec<u8> = predictions.iter().map(|p| p.pred).collect();
    let truths: Vec<u8> = predictions.iter().map(|p| p.truth).collect();
    let cm = confusion(&preds, &truths)?;
    let record = MetricsRecord {
        disease: key.disease.to_string(),
        mode: key.mode.to_string(),
        n_pos_train: key.n_pos,
        repetition: key.repetition,
        tpr: cm.tpr().expect("positive test samples present"),
        tnr: cm.tnr().expect("negative test samples present"),
        kappa: cohens_kappa(&cm)?,
    };
    Ok(SweepOutcome { key, record, predictions })
}

/// Run every `(disease, mode, n_pos, repetition)` job not in `done`,
/// in deterministic output order. Jobs are independent; with `cfg.jobs > 1`
/// they run on a dedicated thread pool, seeds still derived per key.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    seg_ckpt: Option<&Checkpoint>,
    diseases: &[DiseaseKind],
    done: &HashSet<SweepKey>,
) -> Result<Vec<SweepOutcome>> {
    let needs_seg = cfg.modes.iter().any(|m| m.needs_seg());
    let bank = if needs_seg {
        let ckpt = seg_ckpt.ok_or_else(|| {
            TensorError::Usage("sweep includes segmentation-feature modes but no checkpoint given".into())
        })?;
        // One inference pass per sample the sweep can touch: the feature
        // fold's normals plus every positive of the swept diseases.
        let plan = make_split_plan(cfg, corpus, diseases.first().copied().unwrap_or(DiseaseKind::Effusion), 0)?;
        let mut samples: Vec<&LabeledSample> = corpus
            .normals()
            .filter(|s| plan.cls_patients.contains(&s.patient_id))
            .collect();
        for &disease in diseases {
            samples.extend(corpus.positives(disease));
        }
        Some(SegFeatureBank::build(
            ckpt,
            samples.iter().map(|s| (s.id.as_str(), &s.image)),
        )?)
    } else {
        None
    };
    let bank = bank.as_ref();

    let mut keys = Vec::new();
    for &disease in diseases {
        for &mode in &cfg.modes {
            for &n_pos in &cfg.n_pos {
                for repetition in 0..cfg.repetitions {
                    let key = SweepKey { disease, mode, n_pos, repetition };
                    if !done.contains(&key) {
                        keys.push(key);
                    }
                }
            }
        }
    }

    if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| TensorError::Usage(format!("thread pool: {e}")))?;
        pool.install(|| keys.par_iter().map(|&key| run_one(cfg, corpus, bank, key)).collect())
    } else {
        keys.iter().map(|&key| run_one(cfg, corpus, bank, key)).collect()
    }
}

/// Mode ranking per `(disease, n_pos)` by mean kappa.
#[derive(Debug, Clone)]
pub struct ModeComparison {
    /// `(disease, n_pos) -> [(mode, mean_kappa, mean_tpr)]`, best first.
    pub rankings: Vec<((String, usize), Vec<(String, f64, f64)>)>,
    /// Whether CONCAT >= SEG >= IMG holds for mean kappa at every
    /// `(disease, n_pos)` where all three modes are present.
    pub concat_seg_img_ordered: bool,
}

impl ModeComparison {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for ((disease, n_pos), ranks) in &self.rankings {
            out.push_str(&format!("{disease} n_pos={n_pos}:"));
            for (mode, kappa, tpr) in ranks {
                out.push_str(&format!(" {mode}(kappa={kappa:.3},tpr={tpr:.3})"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "kappa ordering CONCAT >= SEG >= IMG: {}\n",
            if self.concat_seg_img_ordered { "holds" } else { "violated" }
        ));
        out
    }
}

/// Rank modes by mean kappa per `(disease, n_pos)`; ties keep the order of
/// `mode_order` (the config's mode list).
pub fn compare_modes(records: &[MetricsRecord], mode_order: &[FeatureMode]) -> Result<ModeComparison> {
    if records.is_empty() {
        return Err(TensorError::Usage("compare_modes: no records".into()));
    }
    let stats = crate::metrics::aggregate(records)?;
    let mut by_group: std::collections::BTreeMap<(String, usize), Vec<(String, f64, f64)>> =
        std::collections::BTreeMap::new();
    for g in &stats {
        by_group
            .entry((g.disease.clone(), g.n_pos_train))
            .or_default()
            .push((g.mode.clone(), g.kappa.0, g.tpr.0));
    }
    let order_of = |mode: &str| -> usize {
        mode_order
            .iter()
            .position(|m| m.as_str() == mode)
            .unwrap_or(mode_order.len())
    };
    let mut ordered = true;
    let mut rankings = Vec::new();
    for (group, mut ranks) in by_group {
        ranks.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| order_of(&a.0).cmp(&order_of(&b.0)))
        });
        let kappa_of = |mode: &str| ranks.iter().find(|(m, _, _)| m == mode).map(|(_, k, _)| *k);
        if let (Some(concat), Some(seg), Some(img)) = (kappa_of("CONCAT"), kappa_of("SEG"), kappa_of("IMG")) {
            if !(concat >= seg && seg >= img) {
                ordered = false;
            }
        }
        rankings.push((group, ranks));
    }
    Ok(ModeComparison { rankings, concat_seg_img_ordered: ordered })
}
