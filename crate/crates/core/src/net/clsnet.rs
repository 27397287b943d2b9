//! Two-class classification network: 13 3x3 convolutions in blocks of
//! {2,2,3,3,3}, each block closed by a 2x2 max pool, then three dense
//! layers ending in 2 logits.

use super::{Checkpoint, Layer, NetworkSpec, ParamCursor};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::{shape_err, Result};

/// Convolutions per block; five pools total.
pub const CLS_BLOCK_SIZES: [usize; 5] = [2, 2, 3, 3, 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClsnetSpec {
    pub in_channels: usize,
    /// Output channels of each conv block.
    pub conv_widths: [usize; 5],
    /// Dense layer sizes; the last entry is the 2-way output.
    pub dense_widths: [usize; 3],
    pub input_size: usize,
}

impl ClsnetSpec {
    /// Feature map shape entering the flatten, `[C, S/32, S/32]`.
    pub fn pre_flatten_shape(&self) -> [usize; 3] {
        let side = self.input_size / 32;
        [self.conv_widths[4], side, side]
    }

    pub fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::new();
        let mut cin = self.in_channels;
        for (bi, &count) in CLS_BLOCK_SIZES.iter().enumerate() {
            for ci in 0..count {
                layers.push(Layer::Conv {
                    name: format!("block{bi}.conv{ci}"),
                    cin,
                    cout: self.conv_widths[bi],
                    k: 3,
                });
                cin = self.conv_widths[bi];
            }
        }
        let mut din: usize = self.pre_flatten_shape().iter().product();
        for (fi, &dout) in self.dense_widths.iter().enumerate() {
            layers.push(Layer::Dense { name: format!("fc{fi}"), din, dout });
            din = dout;
        }
        layers
    }

    /// Paper-scale widths, the VGG-16 defaults.
    pub fn paper(in_channels: usize, input_size: usize) -> Self {
        ClsnetSpec {
            in_channels,
            conv_widths: [64, 128, 256, 512, 512],
            dense_widths: [4096, 4096, 2],
            input_size,
        }
    }

    /// Desk-scale widths sized for CPU training.
    pub fn desk(in_channels: usize, input_size: usize) -> Self {
        ClsnetSpec {
            in_channels,
            conv_widths: [8, 16, 32, 32, 32],
            dense_widths: [64, 64, 2],
            input_size,
        }
    }
}

/// Build the classifier spec and a freshly initialized checkpoint.
pub fn build_clsnet(spec: ClsnetSpec, seed: u64) -> Result<(NetworkSpec, Checkpoint)> {
    if spec.input_size % 32 != 0 || spec.input_size == 0 {
        return Err(shape_err("build_clsnet input size", "divisible by 32", spec.input_size));
    }
    if spec.dense_widths[2] != 2 {
        return Err(shape_err("build_clsnet output", "2-way final dense layer", spec.dense_widths[2]));
    }
    let spec = NetworkSpec::Clsnet(spec);
    let ckpt = Checkpoint::fresh(spec.clone(), seed);
    Ok((spec, ckpt))
}

pub struct ClsnetOutputs {
    /// Length-2 logit vector.
    pub logits: NodeId,
    /// Softmax of the logits.
    pub prob: NodeId,
}

pub fn clsnet_forward<T: Scalar>(
    spec: &ClsnetSpec,
    param_ids: &[NodeId],
    tape: &mut Tape<T>,
    features: NodeId,
) -> Result<ClsnetOutputs> {
    let shape = tape.value(features).shape().to_vec();
    if shape != [spec.in_channels, spec.input_size, spec.input_size] {
        return Err(shape_err(
            "clsnet_forward features",
            format!("[{},{},{}]", spec.in_channels, spec.input_size, spec.input_size),
            format!("{shape:?}"),
        ));
    }
    let mut cursor = ParamCursor::new(param_ids);
    let mut x = features;
    for &count in CLS_BLOCK_SIZES.iter() {
        for _ in 0..count {
            let (w, b) = cursor.next_pair();
            let c = tape.conv2d_same(x, w, b)?;
            x = tape.elu(c);
        }
        x = tape.maxpool2(x)?;
    }
    x = tape.flatten(x)?;
    for fi in 0..3 {
        let (w, b) = cursor.next_pair();
        x = tape.dense(x, w, b)?;
        if fi < 2 {
            x = tape.elu(x);
        }
    }
    cursor.finish();
    let prob = tape.softmax_channels(x)?;
    Ok(ClsnetOutputs { logits: x, prob })
}

/// Argmax class (0 = normal, 1 = diseased) and positive-class probability.
pub fn clsnet_predict(ckpt: &Checkpoint, features: &crate::tensor::Tensor<f32>) -> Result<(usize, f32)> {
    let NetworkSpec::Clsnet(spec) = &ckpt.spec else {
        return Err(shape_err("clsnet_predict", "clsnet checkpoint", "segnet checkpoint"));
    };
    let mut tape = Tape::new();
    let ids = ckpt.params.bind(&mut tape);
    let f = tape.input(features.clone());
    let out = clsnet_forward(spec, &ids, &mut tape, f)?;
    let logits = tape.value(out.logits);
    let pred = if logits.data()[1] > logits.data()[0] { 1 } else { 0 };
    Ok((pred, tape.value(out.prob).data()[1]))
}
