//! Disease edits applied to normal slices. Both keep the source geometry
//! intact and change pixels only where the pathology lives, so the raw
//! image difference can stay subtle while the anatomy becomes abnormal.

use rand::Rng;

use super::generate::GaussianSource;
use super::{intensity, DiseaseKind, LabeledSample, LABEL_LA, LABEL_LV, LABEL_MYO, LABEL_RA, LABEL_RV};
use crate::rng::rng_from;
use crate::tensor::{LabelMap, Result, TensorError};

const EDIT_NOISE_SIGMA: f64 = 0.03;

/// Which pool pair a septal defect bridges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeptalPair {
    Atria,
    Ventricles,
}

impl SeptalPair {
    pub fn labels(&self) -> (u8, u8) {
        match self {
            SeptalPair::Atria => (LABEL_RA, LABEL_LA),
            SeptalPair::Ventricles => (LABEL_RV, LABEL_LV),
        }
    }
}

fn require_normal(sample: &LabeledSample) -> Result<&LabelMap> {
    if sample.disease.is_some() {
        return Err(TensorError::Usage("disease edit needs a normal source sample".into()));
    }
    sample
        .label_map
        .as_ref()
        .ok_or_else(|| TensorError::Usage("disease edit needs a source label map".into()))
}

fn check_severity(severity: f64) -> Result<f64> {
    if !(0.3..=1.0).contains(&severity) {
        return Err(TensorError::Usage(format!("severity {severity} outside [0.3, 1]")));
    }
    Ok((severity - 0.3) / 0.7)
}

/// Foreground centroid and bounding-box diameter of the heart.
fn heart_extent(map: &LabelMap) -> ((f64, f64), f64) {
    let (h, w) = (map.height(), map.width());
    let (mut sy, mut sx, mut n) = (0.0f64, 0.0f64, 0usize);
    let (mut y0, mut y1, mut x0, mut x1) = (h, 0usize, w, 0usize);
    for y in 0..h {
        for x in 0..w {
            if map.get(y, x) > 0 {
                sy += y as f64;
                sx += x as f64;
                n += 1;
                y0 = y0.min(y);
                y1 = y1.max(y);
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
    }
    let diam = ((y1 - y0).max(x1 - x0) + 1) as f64;
    ((sy / n as f64, sx / n as f64), diam)
}

fn dilate(mask: &[bool], h: usize, w: usize, iterations: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..iterations {
        let prev = cur.clone();
        for y in 0..h {
            for x in 0..w {
                if prev[y * w + x] {
                    continue;
                }
                'scan: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                        if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w && prev[ny as usize * w + nx as usize] {
                            cur[y * w + x] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
    cur
}

fn angle_in_arc(angle: f64, start: f64, span: f64) -> bool {
    let tau = std::f64::consts::TAU;
    let rel = (angle - start).rem_euclid(tau);
    rel <= span
}

/// Insert a crescent of fluid-like intensity hugging the heart's outer
/// boundary: arc coverage 40-90% and thickness 3-8% of heart diameter, both
/// scaled by severity. The label map is dropped (positives carry no ground
/// truth).
pub fn apply_effusion(sample: &LabeledSample, seed: u64, severity: f64) -> Result<LabeledSample> {
    let map = require_normal(sample)?;
    let s = check_severity(severity)?;
    let (h, w) = (map.height(), map.width());
    let ((cy, cx), diam) = heart_extent(map);
    let wrap = 0.4 + 0.5 * s;
    let thick = ((0.03 + 0.05 * s) * diam).round().max(2.0) as usize;

    let mut rng = rng_from(seed, "effusion", &[]);
    // Fluid accumulates dependently: the crescent is centered on the
    // inferior heart boundary (+y), with a modest per-case swing.
    let center_angle = std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.5..0.5);
    let start = center_angle - wrap * std::f64::consts::PI;
    let mut noise = GaussianSource::new(rng_from(seed, "effusion-noise", &[]));

    let heart: Vec<bool> = map.data().iter().map(|&l| l > 0).collect();
    let band = dilate(&heart, h, w, thick);

    let mut image = sample.image.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !band[i] || heart[i] {
                continue;
            }
            let angle = (y as f64 - cy).atan2(x as f64 - cx);
            if angle_in_arc(angle, start, wrap * std::f64::consts::TAU) {
                let v = intensity::EFFUSION_FLUID + EDIT_NOISE_SIGMA * noise.next_clipped(2.0);
                image.data_mut()[i] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }

    Ok(LabeledSample {
        id: sample.id.clone(),
        patient_id: sample.patient_id.clone(),
        image,
        label_map: None,
        disease: Some(DiseaseKind::Effusion),
    })
}

fn pool_centroid(map: &LabelMap, label: u8) -> Option<(f64, f64)> {
    let (mut sy, mut sx, mut n) = (0.0f64, 0.0f64, 0usize);
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.get(y, x) == label {
                sy += y as f64;
                sx += x as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sy / n as f64, sx / n as f64))
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (py, px) = p;
    let (ay, ax) = a;
    let (by, bx) = b;
    let (dy, dx) = (by - ay, bx - ax);
    let len2 = dy * dy + dx * dx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((py - ay) * dy + (px - ax) * dx) / len2).clamp(0.0, 1.0)
    };
    let (qy, qx) = (ay + t * dy, ax + t * dx);
    ((py - qy).powi(2) + (px - qx).powi(2)).sqrt()
}

/// Carve a blood-intensity gap through the septal wall between a randomly
/// chosen atrial or ventricular pair, visually merging the two pools. Gap
/// width is 2-8% of heart diameter scaled by severity. Only pixels labeled
/// myocardium in the source are edited.
pub fn apply_septal_defect(sample: &LabeledSample, seed: u64, severity: f64) -> Result<(LabeledSample, SeptalPair)> {
    let map = require_normal(sample)?;
    let s = check_severity(severity)?;
    let (h, w) = (map.height(), map.width());
    let (_, diam) = heart_extent(map);

    let mut rng = rng_from(seed, "septal", &[]);
    let pair = if rng.gen_bool(0.5) { SeptalPair::Atria } else { SeptalPair::Ventricles };
    let (la, lb) = pair.labels();
    let ca = pool_centroid(map, la).ok_or_else(|| TensorError::Usage(format!("label {la} absent from source")))?;
    let cb = pool_centroid(map, lb).ok_or_else(|| TensorError::Usage(format!("label {lb} absent from source")))?;

    let width = ((0.02 + 0.06 * s) * diam).round().max(2.0);
    let mut noise = GaussianSource::new(rng_from(seed, "septal-noise", &[]));

    let mut image = sample.image.clone();
    for y in 0..h {
        for x in 0..w {
            if map.get(y, x) != LABEL_MYO {
                continue;
            }
            if dist_to_segment((y as f64, x as f64), ca, cb) <= width / 2.0 {
                let v = intensity::BLOOD_POOL + EDIT_NOISE_SIGMA * noise.next_clipped(2.0);
                image.data_mut()[y * w + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }

    Ok((
        LabeledSample {
            id: sample.id.clone(),
            patient_id: sample.patient_id.clone(),
            image,
            label_map: None,
            disease: Some(DiseaseKind::Septal),
        },
        pair,
    ))
}
