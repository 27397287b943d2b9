//! The two training loops. Batches are drawn uniformly with replacement, so
//! an epoch is a step count, not a dataset pass; the batch loss is the mean
//! over batch members of the per-sample loss, keeping the gradient scale
//! independent of batch size.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::{class_weights, pixel_label_frequencies, sample_label_frequencies, AdamConfig, AdamState, TrainConfig, WeightExponent};
use crate::net::{
    assemble_features, build_clsnet, build_segnet, clsnet_forward, segnet_forward, Checkpoint, ClsnetSpec,
    FeatureMode, NetworkParams, NetworkSpec, SegFeatureBank,
};
use crate::phantom::LabeledSample;
use crate::rng::{child_seed, rng_from};
use crate::tape::Tape;
use crate::tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct SegTrainSettings {
    pub n: usize,
    pub levels: usize,
    pub num_labels: usize,
    pub config: TrainConfig,
    pub adam: AdamConfig,
}

impl SegTrainSettings {
    pub fn desk() -> Self {
        SegTrainSettings {
            n: 8,
            levels: 4,
            num_labels: crate::phantom::NUM_LABELS,
            config: TrainConfig::seg(),
            adam: AdamConfig::segmentation(),
        }
    }
}

/// Train the segmentation network on normal samples. Deterministic in
/// `(settings, samples, seed)`; returns the checkpoint and per-epoch mean
/// batch loss.
pub fn train_segnet(settings: &SegTrainSettings, samples: &[&LabeledSample], seed: u64) -> Result<(Checkpoint, Vec<f64>)> {
    if samples.is_empty() {
        return Err(TensorError::Usage("train_segnet: empty training set".into()));
    }
    let shape = samples[0].image.shape().to_vec();
    for s in samples {
        if s.image.shape() != shape.as_slice() {
            return Err(TensorError::Usage(format!(
                "train_segnet: sample {} shape {:?} differs from {:?}",
                s.id,
                s.image.shape(),
                shape
            )));
        }
        if s.label_map.is_none() {
            return Err(TensorError::Usage(format!("train_segnet: sample {} has no label map", s.id)));
        }
    }

    let freqs = pixel_label_frequencies(samples.iter().map(|s| s.label_map.as_ref().unwrap()), settings.num_labels)?;
    let weights: Vec<f32> = class_weights(&freqs, WeightExponent::One)?;

    let (_, mut ckpt) = build_segnet(
        settings.n,
        settings.num_labels,
        settings.levels,
        shape[1],
        child_seed(seed, "seg-init", &[]),
    )?;
    let spec = match &ckpt.spec {
        NetworkSpec::Segnet(s) => s.clone(),
        _ => unreachable!(),
    };
    let mut adam = AdamState::new(&ckpt.params, settings.adam);
    let mut batch_rng = rng_from(seed, "seg-batches", &[]);

    let mut history = Vec::with_capacity(settings.config.epochs);
    for _epoch in 0..settings.config.epochs {
        let mut epoch_loss = 0.0f64;
        for _batch in 0..settings.config.batches_per_epoch {
            let idx: Vec<usize> = (0..settings.config.batch_size)
                .map(|_| batch_rng.gen_range(0..samples.len()))
                .collect();
            let mut tape = Tape::new();
            let param_ids = ckpt.params.bind(&mut tape);
            let mut losses = Vec::with_capacity(idx.len());
            for &i in &idx {
                let img = tape.input(samples[i].image.clone());
                let out = segnet_forward(&spec, &param_ids, &mut tape, img)?;
                let loss = tape.seg_cross_entropy(
                    out.prob_map,
                    samples[i].label_map.clone().unwrap(),
                    weights.clone(),
                )?;
                losses.push(loss);
            }
            let batch_loss = tape.mean_scalars(losses)?;
            epoch_loss += tape.value(batch_loss).item() as f64;
            let mut grads = tape.backward(batch_loss)?;
            let grad_vec: Vec<Tensor<f32>> = param_ids.iter().map(|&id| grads.take(id)).collect();
            adam.step(&mut ckpt.params, &grad_vec);
        }
        history.push(epoch_loss / settings.config.batches_per_epoch as f64);
    }
    Ok((ckpt, history))
}

#[derive(Debug, Clone)]
pub struct ClsTrainSettings {
    pub mode: FeatureMode,
    /// Conv/dense widths; `in_channels` is replaced by the assembled
    /// feature depth.
    pub widths: ClsnetSpec,
    pub config: TrainConfig,
    pub adam: AdamConfig,
}

impl ClsTrainSettings {
    pub fn desk(mode: FeatureMode, input_size: usize) -> Self {
        ClsTrainSettings {
            mode,
            widths: ClsnetSpec::desk(1, input_size),
            config: TrainConfig::cls(),
            adam: AdamConfig::default(),
        }
    }
}

/// Assemble the classifier input for every sample up front.
fn assemble_all(
    mode: FeatureMode,
    samples: &[&LabeledSample],
    bank: Option<&SegFeatureBank>,
) -> Result<Vec<Tensor<f32>>> {
    samples
        .iter()
        .map(|s| {
            let seg = match (mode.needs_seg(), bank) {
                (false, _) => None,
                (true, Some(bank)) => Some(bank.get(&s.id).ok_or_else(|| {
                    TensorError::Usage(format!("no segmentation features cached for sample {}", s.id))
                })?),
                (true, None) => {
                    return Err(TensorError::Usage(format!(
                        "feature mode {mode} requires a segmentation checkpoint"
                    )))
                }
            };
            assemble_features(mode, &s.image, seg)
        })
        .collect()
}

/// Fold per-channel standardization of the training features into the
/// first convolution: `conv(W, (x-mu)/sigma) + b == conv(W/sigma, x) + b'`.
/// Feature channels arrive at wildly different scales (raw image in [0,1],
/// segmentation logits up to ~1e2); rescaling the first layer at init makes
/// the 200-step schedule usable on every mode without touching the inputs
/// or the architecture.
fn fold_input_standardization(params: &mut NetworkParams<f32>, features: &[Tensor<f32>]) {
    let channels = features[0].shape()[0];
    let mut mean = vec![0.0f64; channels];
    let mut var = vec![0.0f64; channels];
    let plane = features[0].shape()[1] * features[0].shape()[2];
    let count = (features.len() * plane) as f64;
    for f in features {
        for c in 0..channels {
            for &v in f.channel(c) {
                mean[c] += v as f64;
            }
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    for f in features {
        for c in 0..channels {
            for &v in f.channel(c) {
                var[c] += (v as f64 - mean[c]).powi(2);
            }
        }
    }
    let sigma: Vec<f64> = var.iter().map(|v| (v / count).sqrt().max(1e-3)).collect();

    let entries = params.entries_mut();
    let (w, b) = entries.split_at_mut(1);
    let w = &mut w[0].1;
    let b = &mut b[0].1;
    let (cout, cin, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(cin, channels, "first conv channels");
    for o in 0..cout {
        let mut shift = 0.0f64;
        for c in 0..cin {
            for k in 0..kh * kw {
                let i = (o * cin + c) * kh * kw + k;
                let scaled = w.data()[i] as f64 / sigma[c];
                w.data_mut()[i] = scaled as f32;
                shift += scaled * mean[c];
            }
        }
        b.data_mut()[o] = (b.data()[o] as f64 - shift) as f32;
    }
}

/// Train the two-class classifier on an unbalanced split. The segmentation
/// source is frozen: features come precomputed through `bank`, so no
/// gradient can reach it. Class weights use exponent 1/4 over the split's
/// sample counts.
pub fn train_clsnet(
    settings: &ClsTrainSettings,
    samples: &[&LabeledSample],
    bank: Option<&SegFeatureBank>,
    seed: u64,
) -> Result<(Checkpoint, Vec<f64>)> {
    let labels: Vec<usize> = samples.iter().map(|s| s.class_label()).collect();
    let freqs = sample_label_frequencies(labels.iter().copied())?;
    if freqs[0] == 0 || freqs[1] == 0 {
        return Err(TensorError::Usage(format!(
            "train_clsnet: needs both classes, got {} negatives / {} positives",
            freqs[0], freqs[1]
        )));
    }
    let w = class_weights::<f32>(&freqs, WeightExponent::Quarter)?;
    let weights = [w[0], w[1]];

    let features = assemble_all(settings.mode, samples, bank)?;
    let spec = ClsnetSpec {
        in_channels: features[0].shape()[0],
        ..settings.widths.clone()
    };
    let (_, mut ckpt) = build_clsnet(spec.clone(), child_seed(seed, "cls-init", &[]))?;
    fold_input_standardization(&mut ckpt.params, &features);
    let mut adam = AdamState::new(&ckpt.params, settings.adam);
    let mut batch_rng = rng_from(seed, "cls-batches", &[]);

    let mut history = Vec::with_capacity(settings.config.epochs);
    for _epoch in 0..settings.config.epochs {
        let mut epoch_loss = 0.0f64;
        for _batch in 0..settings.config.batches_per_epoch {
            let idx: Vec<usize> = (0..settings.config.batch_size)
                .map(|_| batch_rng.gen_range(0..samples.len()))
                .collect();
            let mut tape = Tape::new();
            let param_ids = ckpt.params.bind(&mut tape);
            let mut losses = Vec::with_capacity(idx.len());
            for &i in &idx {
                let f = tape.input(features[i].clone());
                let out = clsnet_forward(&spec, &param_ids, &mut tape, f)?;
                losses.push(tape.cls_cross_entropy(out.prob, labels[i], weights)?);
            }
            let batch_loss = tape.mean_scalars(losses)?;
            epoch_loss += tape.value(batch_loss).item() as f64;
            let mut grads = tape.backward(batch_loss)?;
            let grad_vec: Vec<Tensor<f32>> = param_ids.iter().map(|&id| grads.take(id)).collect();
            adam.step(&mut ckpt.params, &grad_vec);
        }
        history.push(epoch_loss / settings.config.batches_per_epoch as f64);
    }
    Ok((ckpt, history))
}

/// Loss history CSV: `epoch,mean_batch_loss`.
pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,mean_batch_loss")?;
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(f, "{epoch},{loss:.6}")?;
    }
    f.flush()?;
    Ok(())
}
