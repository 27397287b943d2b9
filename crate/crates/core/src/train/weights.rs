//! Class weights from label frequencies: `w_l = 1 - (f_l / sum_k f_k)^e`
//! with exponent 1 for segmentation and 1/4 for classification. Weights do
//! not sum to one; they damp the influence of frequent labels.

use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightExponent {
    /// Segmentation: exponent 1.
    One,
    /// Classification: exponent 1/4, easing the penalty gap when negatives
    /// dominate.
    Quarter,
}

impl WeightExponent {
    fn apply(&self, x: f64) -> f64 {
        match self {
            WeightExponent::One => x,
            WeightExponent::Quarter => x.powf(0.25),
        }
    }
}

/// Total pixel count per label across a training set of label maps.
pub fn pixel_label_frequencies<'a>(
    maps: impl IntoIterator<Item = &'a LabelMap>,
    num_labels: usize,
) -> Result<Vec<u64>> {
    let mut freqs = vec![0u64; num_labels];
    let mut seen = false;
    for map in maps {
        seen = true;
        for &l in map.data() {
            let l = l as usize;
            if l >= num_labels {
                return Err(TensorError::Usage(format!("label {l} out of range 0..{num_labels}")));
            }
            freqs[l] += 1;
        }
    }
    if !seen {
        return Err(TensorError::Usage("label frequencies of an empty dataset".into()));
    }
    Ok(freqs)
}

/// Sample counts per class for binary labels (0 = negative, 1 = positive).
pub fn sample_label_frequencies(labels: impl IntoIterator<Item = usize>) -> Result<[u64; 2]> {
    let mut freqs = [0u64; 2];
    let mut seen = false;
    for l in labels {
        seen = true;
        if l > 1 {
            return Err(TensorError::Usage(format!("class label {l} out of range 0..2")));
        }
        freqs[l] += 1;
    }
    if !seen {
        return Err(TensorError::Usage("label frequencies of an empty dataset".into()));
    }
    Ok(freqs)
}

/// `w_l = 1 - (f_l / sum_k f_k)^exponent`; a zero-frequency label gets weight 1.
/// Computed in f64 and cast, so both precisions see the same weights.
pub fn class_weights<T: Scalar>(freqs: &[u64], exponent: WeightExponent) -> Result<Vec<T>> {
    let total: u64 = freqs.iter().sum();
    if total == 0 {
        return Err(TensorError::Usage("class_weights: all-zero frequencies".into()));
    }
    Ok(freqs
        .iter()
        .map(|&f| T::from_f64_lossy(1.0 - exponent.apply(f as f64 / total as f64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_frequencies_count_and_reject() {
        let map = LabelMap::new(2, 2, vec![0, 0, 0, 0]).unwrap();
        assert_eq!(pixel_label_frequencies([&map], 2).unwrap(), vec![4, 0]);
        let bad = LabelMap::new(1, 1, vec![5]).unwrap();
        assert!(pixel_label_frequencies([&bad], 2).is_err());
        assert!(pixel_label_frequencies(std::iter::empty(), 2).is_err());
    }

    #[test]
    fn sample_frequencies_count() {
        let labels = std::iter::repeat(0).take(53).chain(std::iter::repeat(1).take(3));
        assert_eq!(sample_label_frequencies(labels).unwrap(), [53, 3]);
    }

    #[test]
    fn frequencies_are_order_invariant() {
        let a = LabelMap::new(1, 3, vec![0, 1, 1]).unwrap();
        let b = LabelMap::new(1, 3, vec![1, 0, 0]).unwrap();
        let ab = pixel_label_frequencies([&a, &b], 2).unwrap();
        let ba = pixel_label_frequencies([&b, &a], 2).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn uniform_frequencies_give_equal_weights() {
        let w: Vec<f64> = class_weights(&[7; 6], WeightExponent::One).unwrap();
        for v in &w {
            assert!((v - 5.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exponent_one_hand_case() {
        let w: Vec<f64> = class_weights(&[50, 10, 10, 10, 10, 10], WeightExponent::One).unwrap();
        let expect = [0.5, 0.9, 0.9, 0.9, 0.9, 0.9];
        for (v, e) in w.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn exponent_quarter_hand_case() {
        let w: Vec<f64> = class_weights(&[53, 3], WeightExponent::Quarter).unwrap();
        // Quarter power is two square roots, an independent route.
        let oracle = |f: f64| 1.0 - (f / 56.0).sqrt().sqrt();
        assert!((w[0] - oracle(53.0)).abs() < 1e-12, "w_neg = {}", w[0]);
        assert!((w[1] - oracle(3.0)).abs() < 1e-12, "w_pos = {}", w[1]);
        assert!((w[0] - 0.013671).abs() < 1e-4);
        assert!((w[1] - 0.518902).abs() < 1e-4);
    }

    #[test]
    fn zero_frequency_label_gets_weight_one() {
        let w: Vec<f64> = class_weights(&[4, 0], WeightExponent::Quarter).unwrap();
        assert_eq!(w[1], 1.0);
        assert!(class_weights::<f64>(&[0, 0], WeightExponent::One).is_err());
    }

    #[test]
    fn quarter_widens_the_rare_to_common_weight_ratio() {
        // With f_pos < f_neg the positive class outweighs the negative under
        // both exponents, and the quarter power widens w_pos/w_neg further.
        let mut rng = crate::rng::rng_from(17, "weights-ratio", &[]);
        for _ in 0..200 {
            let f_pos = rand::Rng::gen_range(&mut rng, 1u64..50);
            let f_neg = f_pos + rand::Rng::gen_range(&mut rng, 1u64..200);
            let w1: Vec<f64> = class_weights(&[f_neg, f_pos], WeightExponent::One).unwrap();
            let wq: Vec<f64> = class_weights(&[f_neg, f_pos], WeightExponent::Quarter).unwrap();
            assert!(w1[1] > w1[0] && wq[1] > wq[0]);
            assert!(wq[1] / wq[0] > w1[1] / w1[0], "f = ({f_neg},{f_pos})");
        }
    }
}
