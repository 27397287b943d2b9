//! On-disk corpus layout and the in-memory dataset view.
//!
//! ```text
//! <root>/manifest.tsv                          path, patient_id, kind, has_labelmap
//! <root>/<patient>/<slice>.img.tnsr            normal image
//! <root>/<patient>/<slice>.lbl.tnsr            normal label map
//! <root>/positives/<kind>/<id>.img.tnsr        positive image
//! ```

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{generate_patient, generate_positive, CorpusConfig, DiseaseKind, LabeledSample};
use crate::tensor::{load_image, load_label_map, save_label_map, save_tnsr_f32, Result, TensorError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub patient_id: String,
    pub kind: String,
    pub has_labelmap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub patients: usize,
    pub negatives: usize,
    pub effusion_positives: usize,
    pub septal_positives: usize,
}

/// Generate and write the full corpus; returns the emitted counts.
pub fn generate_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<CorpusSummary> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    let mut negatives = 0usize;

    for patient in 0..config.profile.patients {
        let samples = generate_patient(config.master_seed, patient, &config.profile);
        let patient_dir = out_dir.join(&samples[0].patient_id);
        std::fs::create_dir_all(&patient_dir)?;
        for sample in &samples {
            let slice_name = sample.id.rsplit('_').next().expect("slice suffix");
            let rel = format!("{}/{}.img.tnsr", sample.patient_id, slice_name);
            save_tnsr_f32(&out_dir.join(&rel), &sample.image)?;
            let lbl_rel = rel.replace(".img.tnsr", ".lbl.tnsr");
            save_label_map(&out_dir.join(&lbl_rel), sample.label_map.as_ref().expect("normal has labels"))?;
            rows.push(ManifestRow {
                path: rel,
                patient_id: sample.patient_id.clone(),
                kind: "normal".into(),
                has_labelmap: true,
            });
            negatives += 1;
        }
    }

    for kind in DiseaseKind::ALL {
        let dir = out_dir.join("positives").join(kind.as_str());
        std::fs::create_dir_all(&dir)?;
        for index in 0..config.profile.positives_per_disease {
            let sample = generate_positive(config.master_seed, kind, index, &config.profile);
            let rel = format!("positives/{kind}/{}.img.tnsr", sample.id);
            save_tnsr_f32(&out_dir.join(&rel), &sample.image)?;
            rows.push(ManifestRow {
                path: rel,
                patient_id: sample.patient_id.clone(),
                kind: kind.as_str().into(),
                has_labelmap: false,
            });
        }
    }

    write_manifest(&out_dir.join("manifest.tsv"), &rows)?;
    Ok(CorpusSummary {
        patients: config.profile.patients,
        negatives,
        effusion_positives: config.profile.positives_per_disease,
        septal_positives: config.profile.positives_per_disease,
    })
}

fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "path\tpatient_id\tkind\thas_labelmap")?;
    for row in rows {
        writeln!(
            f,
            "{}\t{}\t{}\t{}",
            row.path,
            row.patient_id,
            row.kind,
            u8::from(row.has_labelmap)
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(root.join("manifest.tsv"))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "path\tpatient_id\tkind\thas_labelmap" {
                return Err(TensorError::Format(format!("unexpected manifest header: {line}")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(TensorError::Format(format!("manifest line {i} has {} fields", fields.len())));
        }
        rows.push(ManifestRow {
            path: fields[0].to_string(),
            patient_id: fields[1].to_string(),
            kind: fields[2].to_string(),
            has_labelmap: fields[3] == "1",
        });
    }
    Ok(rows)
}

/// In-memory dataset view over a generated corpus.
#[derive(Debug, Default)]
pub struct Corpus {
    pub samples: Vec<LabeledSample>,
}

impl Corpus {
    pub fn from_samples(samples: Vec<LabeledSample>) -> Self {
        Corpus { samples }
    }

    pub fn normals(&self) -> impl Iterator<Item = &LabeledSample> {
        self.samples.iter().filter(|s| !s.is_positive())
    }

    pub fn positives(&self, kind: DiseaseKind) -> impl Iterator<Item = &LabeledSample> + '_ {
        self.samples.iter().filter(move |s| s.disease == Some(kind))
    }

    /// Sorted unique patient ids of the normal samples.
    pub fn patients(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.normals().map(|s| s.patient_id.clone()).collect();
        set.into_iter().collect()
    }

    pub fn normals_of_patients<'a>(&'a self, patients: &'a [String]) -> impl Iterator<Item = &'a LabeledSample> {
        self.normals().filter(move |s| patients.contains(&s.patient_id))
    }

    pub fn find(&self, id: &str) -> Option<&LabeledSample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let rows = read_manifest(root)?;
    let mut samples = Vec::with_capacity(rows.len());
    for row in rows {
        let img_path: PathBuf = root.join(&row.path);
        let image = load_image(&img_path)?;
        let label_map = if row.has_labelmap {
            Some(load_label_map(&root.join(row.path.replace(".img.tnsr", ".lbl.tnsr")))?)
        } else {
            None
        };
        let file = row.path.rsplit('/').next().unwrap_or(&row.path);
        let stem = file.trim_end_matches(".img.tnsr");
        let id = if row.kind == "normal" {
            format!("{}_{}", row.patient_id, stem)
        } else {
            stem.to_string()
        };
        let disease = DiseaseKind::parse(&row.kind);
        if disease.is_none() && row.kind != "normal" {
            return Err(TensorError::Format(format!("unknown sample kind {}", row.kind)));
        }
        samples.push(LabeledSample {
            id,
            patient_id: row.patient_id,
            image,
            label_map,
            disease,
        });
    }
    Ok(Corpus { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::PhantomProfile;

    fn tiny_config(seed: u64) -> CorpusConfig {
        CorpusConfig {
            profile: PhantomProfile {
                size: 32,
                patients: 3,
                slices_min: 2,
                slices_max: 3,
                positives_per_disease: 2,
                noise_sigma: 0.03,
            },
            master_seed: seed,
        }
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let summary = generate_corpus(&tiny_config(5), dir.path()).unwrap();
        assert_eq!(summary.patients, 3);
        assert_eq!(summary.effusion_positives, 2);

        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.normals().count(), summary.negatives);
        assert_eq!(corpus.positives(DiseaseKind::Effusion).count(), 2);
        assert_eq!(corpus.positives(DiseaseKind::Septal).count(), 2);
        assert_eq!(corpus.patients().len(), 3);
        // Normals keep label maps, positives have none.
        assert!(corpus.normals().all(|s| s.label_map.is_some()));
        assert!(corpus.positives(DiseaseKind::Septal).all(|s| s.label_map.is_none()));
        // Loaded images match the in-memory generator bit for bit.
        let regenerated = crate::phantom::generate_patient(5, 0, &tiny_config(5).profile);
        let loaded = corpus.find(&regenerated[0].id).unwrap();
        assert_eq!(loaded.image.data(), regenerated[0].image.data());
    }

    #[test]
    fn manifest_is_reproducible() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_corpus(&tiny_config(9), d1.path()).unwrap();
        generate_corpus(&tiny_config(9), d2.path()).unwrap();
        let a = std::fs::read(d1.path().join("manifest.tsv")).unwrap();
        let b = std::fs::read(d2.path().join("manifest.tsv")).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn desk_profile_counts() {
        let p = PhantomProfile::desk();
        assert_eq!(p.patients, 20);
        assert_eq!(p.positives_per_disease, 30);
        // Paper-profile negative totals stay inside the declared band.
        let paper = PhantomProfile::paper();
        let min = paper.patients * paper.slices_min;
        let max = paper.patients * paper.slices_max;
        assert!(min >= 400 && max <= 450, "{min}..{max}");
    }
}
