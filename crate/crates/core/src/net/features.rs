//! Feature combinations fed to the classifier. The segmentation network is
//! a frozen feature source here: features are assembled as plain tensors,
//! so no gradient ever reaches the segmentation parameters.

use crate::ops::concat_channels;
use crate::tensor::{shape_err, Result, Tensor, TensorError};

/// Classifier input arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    /// Original image only.
    Img,
    /// Final 1x1-conv feature maps (N channels).
    Seg,
    /// SEG plus the original image.
    ImgSeg,
    /// Final upsample-and-concatenation feature maps (3n channels).
    Concat,
    /// CONCAT plus the original image.
    ImgConcat,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 5] = [
        FeatureMode::Img,
        FeatureMode::Seg,
        FeatureMode::ImgSeg,
        FeatureMode::Concat,
        FeatureMode::ImgConcat,
    ];

    /// Input channel count for segnet base width `n` and `num_labels`
    /// semantic labels.
    pub fn input_channels(&self, n: usize, num_labels: usize) -> usize {
        match self {
            FeatureMode::Img => 1,
            FeatureMode::Seg => num_labels,
            FeatureMode::ImgSeg => num_labels + 1,
            FeatureMode::Concat => 3 * n,
            FeatureMode::ImgConcat => 3 * n + 1,
        }
    }

    pub fn needs_seg(&self) -> bool {
        !matches!(self, FeatureMode::Img)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureMode::Img => "IMG",
            FeatureMode::Seg => "SEG",
            FeatureMode::ImgSeg => "IMG+SEG",
            FeatureMode::Concat => "CONCAT",
            FeatureMode::ImgConcat => "IMG+CONCAT",
        }
    }

    pub fn parse(s: &str) -> Result<FeatureMode> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IMG" => Ok(FeatureMode::Img),
            "SEG" => Ok(FeatureMode::Seg),
            "IMG+SEG" => Ok(FeatureMode::ImgSeg),
            "CONCAT" => Ok(FeatureMode::Concat),
            "IMG+CONCAT" => Ok(FeatureMode::ImgConcat),
            other => Err(TensorError::Usage(format!(
                "unknown feature mode {other}; expected IMG, SEG, IMG+SEG, CONCAT or IMG+CONCAT"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Frozen segmentation taps for one sample.
#[derive(Debug, Clone)]
pub struct SegFeatures {
    /// Final 1x1-conv output, `[N,H,W]`.
    pub seg: Tensor<f32>,
    /// Topmost upsample+concat output, `[3n,H,W]`.
    pub concat: Tensor<f32>,
}

/// Precomputed segmentation taps for a set of samples, keyed by sample id.
/// Built once per (checkpoint, dataset) pair; the classifier side only
/// reads from it, so a bank can be shared across parallel trainings.
#[derive(Debug, Default)]
pub struct SegFeatureBank {
    map: std::collections::HashMap<String, SegFeatures>,
}

impl SegFeatureBank {
    pub fn build<'a>(
        ckpt: &super::Checkpoint,
        images: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
    ) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (id, image) in images {
            let inf = super::segnet_infer(ckpt, image)?;
            map.insert(
                id.to_string(),
                SegFeatures { seg: inf.seg_features, concat: inf.concat_features },
            );
        }
        Ok(SegFeatureBank { map })
    }

    pub fn get(&self, id: &str) -> Option<&SegFeatures> {
        self.map.get(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Channel-concatenate the classifier input for `mode`; the image channel
/// comes first when present.
pub fn assemble_features(mode: FeatureMode, image: &Tensor<f32>, seg: Option<&SegFeatures>) -> Result<Tensor<f32>> {
    if image.rank() != 3 || image.shape()[0] != 1 {
        return Err(shape_err("assemble_features image", "[1,H,W]", format!("{:?}", image.shape())));
    }
    let seg = match (mode.needs_seg(), seg) {
        (false, _) => None,
        (true, Some(s)) => Some(s),
        (true, None) => {
            return Err(TensorError::Usage(format!(
                "feature mode {mode} requires segmentation outputs"
            )))
        }
    };
    match mode {
        FeatureMode::Img => Ok(image.clone()),
        FeatureMode::Seg => Ok(seg.unwrap().seg.clone()),
        FeatureMode::ImgSeg => concat_channels(image, &seg.unwrap().seg),
        FeatureMode::Concat => Ok(seg.unwrap().concat.clone()),
        FeatureMode::ImgConcat => concat_channels(image, &seg.unwrap().concat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_seg(n: usize, num_labels: usize, s: usize) -> SegFeatures {
        SegFeatures {
            seg: Tensor::from_fn(&[num_labels, s, s], |i| i as f32 * 0.01),
            concat: Tensor::from_fn(&[3 * n, s, s], |i| 1.0 - i as f32 * 0.001),
        }
    }

    #[test]
    fn channel_table() {
        for (mode, expect) in FeatureMode::ALL.iter().zip([1usize, 6, 7, 48, 49]) {
            assert_eq!(mode.input_channels(16, 6), expect, "{mode}");
        }
        assert_eq!(FeatureMode::ImgConcat.input_channels(16, 6), 49);
    }

    #[test]
    fn img_mode_is_bit_identical_to_input() {
        let image = Tensor::from_fn(&[1, 4, 4], |i| (i as f32).sqrt());
        let out = assemble_features(FeatureMode::Img, &image, None).unwrap();
        assert_eq!(out.data(), image.data());
    }

    #[test]
    fn seg_mode_passes_seg_features_through() {
        let seg = fake_seg(2, 6, 4);
        let image = Tensor::zeros(&[1, 4, 4]);
        let out = assemble_features(FeatureMode::Seg, &image, Some(&seg)).unwrap();
        assert_eq!(out.shape(), &[6, 4, 4]);
        assert_eq!(out.data(), seg.seg.data());
    }

    #[test]
    fn image_channel_comes_first() {
        let seg = fake_seg(2, 3, 4);
        let image = Tensor::filled(&[1, 4, 4], 9.0);
        let out = assemble_features(FeatureMode::ImgSeg, &image, Some(&seg)).unwrap();
        assert_eq!(out.shape(), &[4, 4, 4]);
        assert_eq!(out.channel(0), image.channel(0));
        let out = assemble_features(FeatureMode::ImgConcat, &image, Some(&seg)).unwrap();
        assert_eq!(out.shape(), &[7, 4, 4]);
        assert_eq!(out.channel(0), image.channel(0));
    }

    #[test]
    fn missing_seg_is_a_usage_error_except_img() {
        let image = Tensor::zeros(&[1, 4, 4]);
        assert!(assemble_features(FeatureMode::Img, &image, None).is_ok());
        for mode in [FeatureMode::Seg, FeatureMode::ImgSeg, FeatureMode::Concat, FeatureMode::ImgConcat] {
            assert!(assemble_features(mode, &image, None).is_err(), "{mode}");
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in FeatureMode::ALL {
            assert_eq!(FeatureMode::parse(mode.as_str()).unwrap(), mode);
        }
        assert!(FeatureMode::parse("RAW").is_err());
    }
}
