//! Phantom geometry and rendering.
//!
//! A patient is one seeded heart geometry: four ellipse blood pools in two
//! columns (right column RA over RV, left column LA over LV), a myocardial
//! wall of fixed thickness around the ventricles, a septum band between the
//! columns, and a brighter thorax disc on a dark background. Slices of a
//! patient are affine-jittered, chamber-modulated variants of that geometry,
//! mimicking an axial sweep.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{intensity, DiseaseKind, LabeledSample, PhantomProfile};
use crate::rng::rng_from;
use crate::tensor::{LabelMap, Tensor};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ellipse {
    pub cu: f64,
    pub cv: f64,
    pub au: f64,
    pub av: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let du = (u - self.cu) / self.au;
        let dv = (v - self.cv) / self.av;
        du * du + dv * dv <= 1.0
    }

    fn contains_expanded(&self, t: f64, u: f64, v: f64) -> bool {
        let du = (u - self.cu) / (self.au + t);
        let dv = (v - self.cv) / (self.av + t);
        du * du + dv * dv <= 1.0
    }
}

/// Canonical chamber layout in heart units: RA, LA, RV, LV.
fn canonical_chambers() -> [Ellipse; 4] {
    [
        Ellipse { cu: -0.42, cv: -0.44, au: 0.30, av: 0.30 },
        Ellipse { cu: 0.42, cv: -0.44, au: 0.30, av: 0.30 },
        Ellipse { cu: -0.43, cv: 0.33, au: 0.34, av: 0.46 },
        Ellipse { cu: 0.43, cv: 0.33, au: 0.34, av: 0.46 },
    ]
}

/// Fully resolved geometry of one slice, in pixel space.
pub(crate) struct SliceGeometry {
    pub center: (f64, f64),
    pub scale: f64,
    cos_r: f64,
    sin_r: f64,
    pub chambers: [Ellipse; 4],
    wall: f64,
    septum_half: f64,
    septum_v: (f64, f64),
    thorax: Ellipse, // pixel frame, axis-aligned
}

impl SliceGeometry {
    fn to_heart(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        (
            (dx * self.cos_r + dy * self.sin_r) / self.scale,
            (-dx * self.sin_r + dy * self.cos_r) / self.scale,
        )
    }

    fn label_at(&self, x: f64, y: f64) -> u8 {
        let (u, v) = self.to_heart(x, y);
        for (i, ch) in self.chambers.iter().enumerate() {
            if ch.contains(u, v) {
                return (i + 1) as u8; // RA, LA, RV, LV = 1..=4
            }
        }
        let in_wall = self.chambers[2].contains_expanded(self.wall, u, v)
            || self.chambers[3].contains_expanded(self.wall, u, v);
        let in_septum = u.abs() <= self.septum_half && v >= self.septum_v.0 && v <= self.septum_v.1;
        if in_wall || in_septum {
            return super::LABEL_MYO;
        }
        super::LABEL_BG
    }

    fn in_thorax(&self, x: f64, y: f64) -> bool {
        let du = (x - self.thorax.cu) / self.thorax.au;
        let dv = (y - self.thorax.cv) / self.thorax.av;
        du * du + dv * dv <= 1.0
    }
}

/// Patient-level draws shared by every slice of one patient.
struct PatientGeometry {
    scale0: f64,
    center0: (f64, f64),
    rot0: f64,
    chambers0: [Ellipse; 4],
    wall: f64,
    thorax: Ellipse,
    n_slices: usize,
}

fn draw_patient(rng: &mut ChaCha8Rng, profile: &PhantomProfile) -> PatientGeometry {
    // Patient-to-patient variation stays small: the slice-level jitter below
    // dominates appearance, so any patient's slices cover the variation seen
    // in every other patient's, and unseen patients still read as normal.
    let size = profile.size as f64;
    let scale0 = size * rng.gen_range(0.28..0.29);
    let center0 = (
        size * (0.5 + rng.gen_range(-0.008..0.008)),
        size * (0.52 + rng.gen_range(-0.008..0.008)),
    );
    let rot0 = rng.gen_range(-2.0f64..2.0).to_radians();
    let mut chambers0 = canonical_chambers();
    for ch in &mut chambers0 {
        ch.au *= rng.gen_range(0.985..1.015);
        ch.av *= rng.gen_range(0.985..1.015);
    }
    let wall = rng.gen_range(0.11..0.12);
    let thorax = Ellipse {
        cu: size * (0.5 + rng.gen_range(-0.005..0.005)),
        cv: size * (0.53 + rng.gen_range(-0.005..0.005)),
        au: size * rng.gen_range(0.445..0.455),
        av: size * rng.gen_range(0.405..0.415),
    };
    let n_slices = rng.gen_range(profile.slices_min..=profile.slices_max);
    PatientGeometry { scale0, center0, rot0, chambers0, wall, thorax, n_slices }
}

fn draw_slice(patient: &PatientGeometry, rng: &mut ChaCha8Rng, size: f64) -> SliceGeometry {
    let scale = patient.scale0 * rng.gen_range(0.9..1.1);
    let rot = patient.rot0 + rng.gen_range(-10.0f64..10.0).to_radians();
    let center = (
        patient.center0.0 + size * rng.gen_range(-0.05..0.05),
        patient.center0.1 + size * rng.gen_range(-0.05..0.05),
    );
    // Axial-sweep modulation: atria and ventricles breathe independently.
    let atria_mod = rng.gen_range(0.85..1.05);
    let vent_mod = rng.gen_range(0.85..1.05);
    let mut chambers = patient.chambers0;
    for (i, ch) in chambers.iter_mut().enumerate() {
        let m = if i < 2 { atria_mod } else { vent_mod };
        ch.au *= m;
        ch.av *= m;
    }
    // The septum band must span both inter-pool gaps so no background
    // slivers survive between the pools.
    let gap = |left: &Ellipse, right: &Ellipse| ((right.cu - right.au).abs()).max((left.cu + left.au).abs());
    let septum_half = gap(&chambers[0], &chambers[1]).max(gap(&chambers[2], &chambers[3])).max(0.10) + 0.02;
    let v_top = (chambers[0].cv - chambers[0].av * 0.9).min(chambers[1].cv - chambers[1].av * 0.9);
    let v_bottom = (chambers[2].cv + chambers[2].av * 0.9).max(chambers[3].cv + chambers[3].av * 0.9);
    SliceGeometry {
        center,
        scale,
        cos_r: rot.cos(),
        sin_r: rot.sin(),
        chambers,
        wall: patient.wall,
        septum_half,
        septum_v: (v_top, v_bottom),
        thorax: patient.thorax,
    }
}

/// Box-Muller gaussian stream over a seeded uniform source.
pub(crate) struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(rng: ChaCha8Rng) -> Self {
        GaussianSource { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Tail-clipped draw; disease edits use this so a single extreme draw
    /// cannot push an edited pixel across the blood-intensity threshold.
    pub fn next_clipped(&mut self, bound: f64) -> f64 {
        self.next().clamp(-bound, bound)
    }
}

pub(crate) fn render(geom: &SliceGeometry, size: usize, sigma: f64, noise: &mut GaussianSource) -> (Tensor<f32>, LabelMap) {
    let mut labels = LabelMap::zeros(size, size);
    let mut image = Tensor::<f32>::zeros(&[1, size, size]);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let label = geom.label_at(px, py);
            labels.set(y, x, label);
            let clean = match label {
                super::LABEL_BG => {
                    if geom.in_thorax(px, py) {
                        intensity::THORAX
                    } else {
                        intensity::BACKGROUND
                    }
                }
                super::LABEL_MYO => intensity::MYOCARDIUM,
                _ => intensity::BLOOD_POOL,
            };
            let noisy = (clean + sigma * noise.next()).clamp(0.0, 1.0);
            image.data_mut()[y * size + x] = noisy as f32;
        }
    }
    (image, labels)
}

/// All normal slices of one virtual patient, bit-reproducible from
/// `(master_seed, patient_index, profile)`.
pub fn generate_patient(master_seed: u64, patient_index: usize, profile: &PhantomProfile) -> Vec<LabeledSample> {
    let mut prng = rng_from(master_seed, "patient", &[patient_index as u64]);
    let patient = draw_patient(&mut prng, profile);
    let patient_id = format!("p{patient_index:03}");
    (0..patient.n_slices)
        .map(|slice| {
            let mut srng = rng_from(master_seed, "slice", &[patient_index as u64, slice as u64]);
            let geom = draw_slice(&patient, &mut srng, profile.size as f64);
            let mut noise = GaussianSource::new(rng_from(master_seed, "noise", &[patient_index as u64, slice as u64]));
            let (image, label_map) = render(&geom, profile.size, profile.noise_sigma, &mut noise);
            LabeledSample {
                id: format!("{patient_id}_s{slice:02}"),
                patient_id: patient_id.clone(),
                image,
                label_map: Some(label_map),
                disease: None,
            }
        })
        .collect()
}

/// One positive sample: a fresh held-out geometry (its own virtual patient,
/// never among the normal patients) with the disease edit applied.
pub fn generate_positive(master_seed: u64, kind: DiseaseKind, index: usize, profile: &PhantomProfile) -> LabeledSample {
    let mut prng = rng_from(master_seed, "pos-geom", &[kind.tag(), index as u64]);
    let patient = draw_patient(&mut prng, profile);
    let mut srng = rng_from(master_seed, "pos-slice", &[kind.tag(), index as u64]);
    let geom = draw_slice(&patient, &mut srng, profile.size as f64);
    let mut noise = GaussianSource::new(rng_from(master_seed, "pos-noise", &[kind.tag(), index as u64]));
    let (image, label_map) = render(&geom, profile.size, profile.noise_sigma, &mut noise);
    let id = format!("pos-{kind}-{index:02}");
    let normal = LabeledSample {
        id: id.clone(),
        patient_id: id,
        image,
        label_map: Some(label_map),
        disease: None,
    };
    let mut erng = rng_from(master_seed, "pos-edit", &[kind.tag(), index as u64]);
    let severity = erng.gen_range(0.3..=1.0);
    let edit_seed = erng.gen::<u64>();
    match kind {
        DiseaseKind::Effusion => super::apply_effusion(&normal, edit_seed, severity).expect("valid normal source"),
        DiseaseKind::Septal => {
            super::apply_septal_defect(&normal, edit_seed, severity)
                .expect("valid normal source")
                .0
        }
    }
}
