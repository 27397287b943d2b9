//! Deterministic synthetic stand-in for a clinical four-chamber CT corpus:
//! normal slices with six-label ground truth (background, right/left atria,
//! right/left ventricles, myocardium), plus effusion-like and septal-defect
//! positives derived from held-out geometry.

mod corpus;
mod disease;
mod generate;

pub use corpus::{generate_corpus, load_corpus, read_manifest, Corpus, CorpusSummary, ManifestRow};
pub use disease::{apply_effusion, apply_septal_defect};
pub use generate::{generate_patient, generate_positive};

use crate::tensor::{LabelMap, Tensor};

/// Semantic labels, codes 0..6 in this order.
pub const LABEL_NAMES: [&str; 6] = ["BG", "RA", "LA", "RV", "LV", "Myo"];
pub const NUM_LABELS: usize = 6;

pub const LABEL_BG: u8 = 0;
pub const LABEL_RA: u8 = 1;
pub const LABEL_LA: u8 = 2;
pub const LABEL_RV: u8 = 3;
pub const LABEL_LV: u8 = 4;
pub const LABEL_MYO: u8 = 5;

/// Nominal clean intensities before noise.
pub mod intensity {
    pub const BACKGROUND: f64 = 0.05;
    pub const THORAX: f64 = 0.35;
    pub const MYOCARDIUM: f64 = 0.55;
    pub const BLOOD_POOL: f64 = 0.75;
    pub const EFFUSION_FLUID: f64 = 0.45;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiseaseKind {
    Effusion,
    Septal,
}

impl DiseaseKind {
    pub const ALL: [DiseaseKind; 2] = [DiseaseKind::Effusion, DiseaseKind::Septal];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiseaseKind::Effusion => "effusion",
            DiseaseKind::Septal => "septal",
        }
    }

    pub fn parse(s: &str) -> Option<DiseaseKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "effusion" => Some(DiseaseKind::Effusion),
            "septal" => Some(DiseaseKind::Septal),
            _ => None,
        }
    }

    /// Stable numeric tag for seed derivation.
    pub fn tag(&self) -> u64 {
        match self {
            DiseaseKind::Effusion => 0,
            DiseaseKind::Septal => 1,
        }
    }
}

impl std::fmt::Display for DiseaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One corpus entry: a `[1,H,W]` image in `[0,1]`, the ground-truth label
/// map for normals (positives carry none), a binary disease label, and the
/// patient grouping key.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub id: String,
    pub patient_id: String,
    pub image: Tensor<f32>,
    pub label_map: Option<LabelMap>,
    pub disease: Option<DiseaseKind>,
}

impl LabeledSample {
    /// Binary disease label: 1 = diseased, 0 = normal.
    pub fn class_label(&self) -> usize {
        usize::from(self.disease.is_some())
    }

    pub fn is_positive(&self) -> bool {
        self.disease.is_some()
    }
}

/// Corpus scale knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomProfile {
    pub size: usize,
    pub patients: usize,
    pub slices_min: usize,
    pub slices_max: usize,
    pub positives_per_disease: usize,
    pub noise_sigma: f64,
}

impl PhantomProfile {
    /// 256x256, 40 patients, 10-11 slices each (targets ~425 negatives),
    /// 30 positives per disease.
    pub fn paper() -> Self {
        PhantomProfile {
            size: 256,
            patients: 40,
            slices_min: 10,
            slices_max: 11,
            positives_per_disease: 30,
            noise_sigma: 0.03,
        }
    }

    /// 64x64, 20 patients, 7-9 slices each, 30 positives per disease.
    pub fn desk() -> Self {
        PhantomProfile {
            size: 64,
            patients: 20,
            slices_min: 7,
            slices_max: 9,
            positives_per_disease: 30,
            noise_sigma: 0.03,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub profile: PhantomProfile,
    pub master_seed: u64,
}
