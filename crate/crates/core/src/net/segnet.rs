//! Fully convolutional segmentation network: a contracting path of paired
//! 3x3 convolutions (ELU) with 2x2 max pooling and channel doubling, an
//! expanding path of repetition upsampling with skip concatenation and
//! channel halving, and a final 1x1 convolution onto the label channels.

use super::{Checkpoint, Layer, NetworkSpec, ParamCursor};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::{shape_err, LabelMap, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegnetSpec {
    /// Channels of the first convolution; doubled after each pooling.
    pub n: usize,
    /// Semantic label count of the output map.
    pub num_labels: usize,
    /// Pooling (and upsampling) depth.
    pub levels: usize,
    pub in_channels: usize,
    /// Nominal input side; forward accepts any pool-divisible size.
    pub input_size: usize,
}

impl SegnetSpec {
    /// Channel width of contracting level `i`.
    pub fn level_width(&self, i: usize) -> usize {
        self.n << i
    }

    pub fn bottleneck_width(&self) -> usize {
        self.n << self.levels
    }

    /// Channels of the topmost upsample-and-concatenate output, the CONCAT
    /// feature tap.
    pub fn concat_channels(&self) -> usize {
        3 * self.n
    }

    /// Decoder stage `i` concatenates the upsampled deeper features with the
    /// skip tensor of contracting level `i`; returns
    /// `(upsampled_channels, skip_channels)` per stage, deepest first.
    pub fn stage_plan(&self) -> Vec<(usize, usize, usize)> {
        (0..self.levels)
            .rev()
            .map(|i| (i, self.level_width(i + 1), self.level_width(i)))
            .collect()
    }

    pub fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::new();
        for i in 0..self.levels {
            let cin = if i == 0 { self.in_channels } else { self.level_width(i - 1) };
            let w = self.level_width(i);
            layers.push(Layer::Conv { name: format!("enc{i}.conv0"), cin, cout: w, k: 3 });
            layers.push(Layer::Conv { name: format!("enc{i}.conv1"), cin: w, cout: w, k: 3 });
        }
        let bw = self.bottleneck_width();
        layers.push(Layer::Conv { name: "mid.conv0".into(), cin: bw / 2, cout: bw, k: 3 });
        layers.push(Layer::Conv { name: "mid.conv1".into(), cin: bw, cout: bw, k: 3 });
        for (i, up, skip) in self.stage_plan() {
            let w = self.level_width(i);
            layers.push(Layer::Conv { name: format!("dec{i}.conv0"), cin: up + skip, cout: w, k: 3 });
            layers.push(Layer::Conv { name: format!("dec{i}.conv1"), cin: w, cout: w, k: 3 });
        }
        layers.push(Layer::Conv { name: "head".into(), cin: self.n, cout: self.num_labels, k: 1 });
        layers
    }
}

/// Build the segmentation spec and a freshly initialized checkpoint.
pub fn build_segnet(n: usize, num_labels: usize, levels: usize, input_size: usize, seed: u64) -> Result<(NetworkSpec, Checkpoint)> {
    if n < 1 || num_labels < 2 || levels < 1 {
        return Err(shape_err("build_segnet", "n >= 1, N >= 2, levels >= 1", format!("n={n}, N={num_labels}, levels={levels}")));
    }
    if input_size % (1 << levels) != 0 {
        return Err(shape_err(
            "build_segnet input size",
            format!("divisible by 2^{levels}"),
            input_size,
        ));
    }
    let spec = NetworkSpec::Segnet(SegnetSpec {
        n,
        num_labels,
        levels,
        in_channels: 1,
        input_size,
    });
    let ckpt = Checkpoint::fresh(spec.clone(), seed);
    Ok((spec, ckpt))
}

/// All four tap points of one segmentation forward pass.
pub struct SegnetOutputs {
    /// Final 1x1 convolution output, `[N,H,W]`; identical to `seg_features`.
    pub logits: NodeId,
    /// Per-pixel softmax of the logits.
    pub prob_map: NodeId,
    /// The SEG feature tap (same node as `logits`).
    pub seg_features: NodeId,
    /// The CONCAT feature tap: topmost upsample+concat output, `[3n,H,W]`.
    pub concat_features: NodeId,
}

/// Run the segmentation network on a tape. `param_ids` must come from
/// [`NetworkParams::bind`] on the same tape.
pub fn segnet_forward<T: Scalar>(
    spec: &SegnetSpec,
    param_ids: &[NodeId],
    tape: &mut Tape<T>,
    image: NodeId,
) -> Result<SegnetOutputs> {
    let shape = tape.value(image).shape().to_vec();
    if shape.len() != 3 || shape[0] != spec.in_channels {
        return Err(shape_err(
            "segnet_forward image",
            format!("[{},H,W]", spec.in_channels),
            format!("{shape:?}"),
        ));
    }
    let div = 1 << spec.levels;
    if shape[1] % div != 0 || shape[2] % div != 0 {
        return Err(shape_err(
            "segnet_forward image size",
            format!("H,W divisible by {div}"),
            format!("{}x{}", shape[1], shape[2]),
        ));
    }

    let mut cursor = ParamCursor::new(param_ids);
    let conv_elu = |tape: &mut Tape<T>, x: NodeId, cursor: &mut ParamCursor| -> Result<NodeId> {
        let (w, b) = cursor.next_pair();
        let c = tape.conv2d_same(x, w, b)?;
        Ok(tape.elu(c))
    };

    let mut x = image;
    let mut skips = Vec::with_capacity(spec.levels);
    for _ in 0..spec.levels {
        x = conv_elu(tape, x, &mut cursor)?;
        x = conv_elu(tape, x, &mut cursor)?;
        skips.push(x);
        x = tape.maxpool2(x)?;
    }
    x = conv_elu(tape, x, &mut cursor)?;
    x = conv_elu(tape, x, &mut cursor)?;

    let mut concat_features = None;
    for (i, _, _) in spec.stage_plan() {
        let up = tape.upsample2(x)?;
        let cat = tape.concat_channels(up, skips[i])?;
        if i == 0 {
            concat_features = Some(cat);
        }
        x = conv_elu(tape, cat, &mut cursor)?;
        x = conv_elu(tape, x, &mut cursor)?;
    }

    let (hw, hb) = cursor.next_pair();
    let logits = tape.conv2d_same(x, hw, hb)?;
    cursor.finish();
    let prob_map = tape.softmax_channels(logits)?;

    Ok(SegnetOutputs {
        logits,
        prob_map,
        seg_features: logits,
        concat_features: concat_features.expect("levels >= 1 produces a top concat"),
    })
}

/// Plain-value outputs of an inference pass.
pub struct SegnetInference {
    pub prob_map: Tensor<f32>,
    /// Per-pixel argmax of the probability map.
    pub label_map: LabelMap,
    pub seg_features: Tensor<f32>,
    pub concat_features: Tensor<f32>,
}

/// Run a checkpoint on one image and extract all tap values.
pub fn segnet_infer(ckpt: &Checkpoint, image: &Tensor<f32>) -> Result<SegnetInference> {
    let NetworkSpec::Segnet(spec) = &ckpt.spec else {
        return Err(shape_err("segnet_infer", "segnet checkpoint", "clsnet checkpoint"));
    };
    let mut tape = Tape::new();
    let ids = ckpt.params.bind(&mut tape);
    let img = tape.input(image.clone());
    let out = segnet_forward(spec, &ids, &mut tape, img)?;
    let prob_map = tape.value(out.prob_map).clone();
    let label_map = argmax_channels(&prob_map);
    Ok(SegnetInference {
        label_map,
        seg_features: tape.value(out.seg_features).clone(),
        concat_features: tape.value(out.concat_features).clone(),
        prob_map,
    })
}

/// Per-pixel argmax over channels; ties go to the lower label index.
pub fn argmax_channels(prob: &Tensor<f32>) -> LabelMap {
    let (c, h, w) = (prob.shape()[0], prob.shape()[1], prob.shape()[2]);
    let hw = h * w;
    let mut out = LabelMap::zeros(h, w);
    for px in 0..hw {
        let mut best = 0usize;
        let mut best_v = prob.data()[px];
        for ci in 1..c {
            let v = prob.data()[ci * hw + px];
            if v > best_v {
                best_v = v;
                best = ci;
            }
        }
        out.data_mut()[px] = best as u8;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_of(ckpt: &Checkpoint) -> SegnetSpec {
        match &ckpt.spec {
            NetworkSpec::Segnet(s) => s.clone(),
            _ => panic!("segnet expected"),
        }
    }

    #[test]
    fn paper_shape_256_input_six_labels() {
        let (spec, _) = build_segnet(16, 6, 4, 256, 0).unwrap();
        let NetworkSpec::Segnet(s) = &spec else { panic!() };
        assert_eq!(s.concat_channels(), 48);
        assert_eq!(s.bottleneck_width(), 256);
        assert_eq!(spec.weight_layer_count(), 19);
    }

    #[test]
    fn bottleneck_width_n8_levels4() {
        let (spec, _) = build_segnet(8, 6, 4, 64, 0).unwrap();
        let NetworkSpec::Segnet(s) = &spec else { panic!() };
        assert_eq!(s.bottleneck_width(), 128);
    }

    #[test]
    fn rejects_indivisible_input() {
        assert!(build_segnet(8, 6, 4, 72, 0).is_err());
        assert!(build_segnet(8, 6, 4, 80, 0).is_ok());
    }

    #[test]
    fn forward_shapes_and_finite_outputs() {
        let (_, ckpt) = build_segnet(2, 3, 2, 8, 1).unwrap();
        let spec = spec_of(&ckpt);
        let mut tape = Tape::new();
        let ids = ckpt.params.cast::<f64>().bind(&mut tape);
        let img = tape.input(Tensor::<f64>::from_fn(&[1, 8, 8], |i| (i as f64 * 0.37).sin()));
        let out = segnet_forward(&spec, &ids, &mut tape, img).unwrap();
        assert_eq!(tape.value(out.logits).shape(), &[3, 8, 8]);
        assert_eq!(tape.value(out.concat_features).shape(), &[6, 8, 8]);
        assert!(tape.value(out.prob_map).is_all_finite());
        // prob_map sums to one per pixel.
        let p = tape.value(out.prob_map);
        for px in 0..64 {
            let s: f64 = (0..3).map(|c| p.data()[c * 64 + px]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        // seg_features and logits are the same tensor.
        assert_eq!(out.seg_features, out.logits);
    }

    #[test]
    fn fully_convolutional_across_sizes() {
        let (_, ckpt) = build_segnet(2, 3, 2, 8, 2).unwrap();
        let spec = spec_of(&ckpt);
        for size in [8usize, 16, 24] {
            let mut tape = Tape::new();
            let ids = ckpt.params.bind(&mut tape);
            let img = tape.input(Tensor::<f32>::from_fn(&[1, size, size], |i| (i % 7) as f32 * 0.1));
            let out = segnet_forward(&spec, &ids, &mut tape, img).unwrap();
            assert_eq!(tape.value(out.logits).shape(), &[3, size, size]);
        }
    }

    #[test]
    fn decoder_consumes_matching_encoder_skips() {
        let (spec, _) = build_segnet(4, 6, 4, 64, 0).unwrap();
        let NetworkSpec::Segnet(s) = &spec else { panic!() };
        for (i, up, skip) in s.stage_plan() {
            assert_eq!(skip, s.level_width(i));
            assert_eq!(up, 2 * skip);
        }
        // Structural: dec{i}.conv0 input channels equal upsampled + skip.
        for layer in spec.layers() {
            if let Layer::Conv { name, cin, .. } = &layer {
                if name.starts_with("dec") && name.ends_with("conv0") {
                    let i: usize = name[3..name.find('.').unwrap()].parse().unwrap();
                    assert_eq!(*cin, 3 * s.level_width(i), "{name}");
                }
            }
        }
    }

    #[test]
    fn param_count_is_deterministic() {
        let (a, _) = build_segnet(8, 6, 4, 64, 0).unwrap();
        let (b, _) = build_segnet(8, 6, 4, 64, 99).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        assert!(a.param_count() > 0);
    }
}
