//! Reverse-mode differentiation via operation recording.
//!
//! A [`Tape`] owns every tensor produced during a forward pass plus an
//! ordered record of the operations that produced them (with saved
//! auxiliaries such as max-pool winner indices). [`Tape::backward`] replays
//! the record in reverse, accumulating one gradient per node; parameter
//! leaves are flagged so optimizers can collect exactly their gradients.
//!
//! A tape is confined to one logical training step; tensors read out of it
//! are plain values and may be shared freely.

use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Result, Tensor, TensorError};

/// Index of a value node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

struct Node<T> {
    value: Tensor<T>,
    is_param: bool,
}

enum OpRecord<T> {
    Conv2dSame { input: NodeId, kernels: NodeId, bias: NodeId, out: NodeId },
    MaxPool2 { input: NodeId, out: NodeId, winners: Vec<u32> },
    Upsample2 { input: NodeId, out: NodeId },
    ConcatChannels { a: NodeId, b: NodeId, out: NodeId },
    Elu { input: NodeId, out: NodeId },
    SoftmaxChannels { input: NodeId, out: NodeId },
    Dense { input: NodeId, weights: NodeId, bias: NodeId, out: NodeId },
    Flatten { input: NodeId, out: NodeId },
    SegCrossEntropy { prob: NodeId, out: NodeId, labels: LabelMap, weights: Vec<T> },
    ClsCrossEntropy { prob: NodeId, out: NodeId, label: usize, weights: [T; 2] },
    Sum { input: NodeId, out: NodeId },
    MeanScalars { inputs: Vec<NodeId>, out: NodeId },
}

/// Recorded forward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    ops: Vec<OpRecord<T>>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. `id`; zeros if nothing flowed to it.
    pub fn wrt(&self, id: NodeId) -> Tensor<T> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Tensor<T> {
        match self.grads[id.0].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), ops: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, is_param: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, is_param });
        id
    }

    /// Register a non-parameter leaf (input data).
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, false)
    }

    /// Register a trainable parameter leaf.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn conv2d_same(&mut self, input: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = ops::conv2d_same(self.value(input), self.value(kernels), self.value(bias))?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::Conv2dSame { input, kernels, bias, out });
        Ok(out)
    }

    pub fn maxpool2(&mut self, input: NodeId) -> Result<NodeId> {
        let (out, winners) = ops::maxpool2(self.value(input))?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::MaxPool2 { input, out, winners });
        Ok(out)
    }

    pub fn upsample2(&mut self, input: NodeId) -> Result<NodeId> {
        let out = ops::upsample2(self.value(input))?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::Upsample2 { input, out });
        Ok(out)
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::ConcatChannels { a, b, out });
        Ok(out)
    }

    pub fn elu(&mut self, input: NodeId) -> NodeId {
        let out = ops::elu(self.value(input));
        let out = self.push(out, false);
        self.ops.push(OpRecord::Elu { input, out });
        out
    }

    pub fn softmax_channels(&mut self, input: NodeId) -> Result<NodeId> {
        let out = ops::softmax_channels(self.value(input))?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::SoftmaxChannels { input, out });
        Ok(out)
    }

    pub fn dense(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = ops::dense(self.value(input), self.value(weights), self.value(bias))?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::Dense { input, weights, bias, out });
        Ok(out)
    }

    /// Reshape `[C,H,W]` to a rank-1 vector.
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let n = self.value(input).numel();
        let out = self.value(input).reshaped(vec![n])?;
        let out = self.push(out, false);
        self.ops.push(OpRecord::Flatten { input, out });
        Ok(out)
    }

    pub fn seg_cross_entropy(&mut self, prob: NodeId, labels: LabelMap, weights: Vec<T>) -> Result<NodeId> {
        let loss = ops::seg_cross_entropy(self.value(prob), &labels, &weights)?;
        let out = self.push(Tensor::scalar(loss), false);
        self.ops.push(OpRecord::SegCrossEntropy { prob, out, labels, weights });
        Ok(out)
    }

    pub fn cls_cross_entropy(&mut self, prob: NodeId, label: usize, weights: [T; 2]) -> Result<NodeId> {
        let loss = ops::cls_cross_entropy(self.value(prob), label, &weights)?;
        let out = self.push(Tensor::scalar(loss), false);
        self.ops.push(OpRecord::ClsCrossEntropy { prob, out, label, weights });
        Ok(out)
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let mut acc = T::zero();
        for &v in self.value(input).data() {
            acc += v;
        }
        let out = self.push(Tensor::scalar(acc), false);
        self.ops.push(OpRecord::Sum { input, out });
        out
    }

    /// Mean of scalar nodes (the batch-loss reduction).
    pub fn mean_scalars(&mut self, inputs: Vec<NodeId>) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(TensorError::Usage("mean_scalars: empty input list".into()));
        }
        let mut acc = T::zero();
        for &id in &inputs {
            let v = self.value(id);
            if v.numel() != 1 {
                return Err(TensorError::Usage("mean_scalars: non-scalar input".into()));
            }
            acc += v.item();
        }
        let mean = acc / T::from_f64_lossy(inputs.len() as f64);
        let out = self.push(Tensor::scalar(mean), false);
        self.ops.push(OpRecord::MeanScalars { inputs, out });
        Ok(out)
    }

    /// Recompute every recorded output from the leaves; used to verify the
    /// record reproduces the forward pass bit-exactly.
    pub fn replay_forward(&self) -> Result<Vec<Tensor<T>>> {
        let mut values: Vec<Tensor<T>> = self.nodes.iter().map(|n| n.value.clone()).collect();
        for op in &self.ops {
            match op {
                OpRecord::Conv2dSame { input, kernels, bias, out } => {
                    values[out.0] = ops::conv2d_same(&values[input.0], &values[kernels.0], &values[bias.0])?;
                }
                OpRecord::MaxPool2 { input, out, .. } => {
                    values[out.0] = ops::maxpool2(&values[input.0])?.0;
                }
                OpRecord::Upsample2 { input, out } => {
                    values[out.0] = ops::upsample2(&values[input.0])?;
                }
                OpRecord::ConcatChannels { a, b, out } => {
                    values[out.0] = ops::concat_channels(&values[a.0], &values[b.0])?;
                }
                OpRecord::Elu { input, out } => {
                    values[out.0] = ops::elu(&values[input.0]);
                }
                OpRecord::SoftmaxChannels { input, out } => {
                    values[out.0] = ops::softmax_channels(&values[input.0])?;
                }
                OpRecord::Dense { input, weights, bias, out } => {
                    values[out.0] = ops::dense(&values[input.0], &values[weights.0], &values[bias.0])?;
                }
                OpRecord::Flatten { input, out } => {
                    let n = values[input.0].numel();
                    values[out.0] = values[input.0].reshaped(vec![n])?;
                }
                OpRecord::SegCrossEntropy { prob, out, labels, weights } => {
                    values[out.0] = Tensor::scalar(ops::seg_cross_entropy(&values[prob.0], labels, weights)?);
                }
                OpRecord::ClsCrossEntropy { prob, out, label, weights } => {
                    values[out.0] = Tensor::scalar(ops::cls_cross_entropy(&values[prob.0], *label, weights)?);
                }
                OpRecord::Sum { input, out } => {
                    let mut acc = T::zero();
                    for &v in values[input.0].data() {
                        acc += v;
                    }
                    values[out.0] = Tensor::scalar(acc);
                }
                OpRecord::MeanScalars { inputs, out } => {
                    let mut acc = T::zero();
                    for id in inputs {
                        acc += values[id.0].item();
                    }
                    values[out.0] = Tensor::scalar(acc / T::from_f64_lossy(inputs.len() as f64));
                }
            }
        }
        Ok(values)
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, &v) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar `loss` node. Every node reachable from
    /// the loss gets its chain-rule gradient; untouched leaves read back as
    /// zeros from the returned [`Gradients`].
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::Usage(format!("loss node {} not on this tape", loss.0)));
        }
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Usage("backward: loss must be a scalar node".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for op in self.ops.iter().rev() {
            match op {
                OpRecord::Conv2dSame { input, kernels, bias, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let (gi, gk, gb) = ops::conv2d_same_backward(self.value(*input), self.value(*kernels), &g);
                    Self::accumulate(&mut grads, *input, gi);
                    Self::accumulate(&mut grads, *kernels, gk);
                    Self::accumulate(&mut grads, *bias, gb);
                }
                OpRecord::MaxPool2 { input, out, winners } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gi = ops::maxpool2_backward(self.value(*input).shape(), winners, &g);
                    Self::accumulate(&mut grads, *input, gi);
                }
                OpRecord::Upsample2 { input, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gi = ops::upsample2_backward(self.value(*input).shape(), &g);
                    Self::accumulate(&mut grads, *input, gi);
                }
                OpRecord::ConcatChannels { a, b, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let (ga, gb) = ops::concat_channels_backward(self.value(*a).shape()[0], &g);
                    Self::accumulate(&mut grads, *a, ga);
                    Self::accumulate(&mut grads, *b, gb);
                }
                OpRecord::Elu { input, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gi = ops::elu_backward(self.value(*input), self.value(*out), &g);
                    Self::accumulate(&mut grads, *input, gi);
                }
                OpRecord::SoftmaxChannels { input, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gi = ops::softmax_channels_backward(self.value(*out), &g);
                    Self::accumulate(&mut grads, *input, gi);
                }
                OpRecord::Dense { input, weights, bias, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let (gi, gw, gb) = ops::dense_backward(self.value(*input), self.value(*weights), &g);
                    Self::accumulate(&mut grads, *input, gi);
                    Self::accumulate(&mut grads, *weights, gw);
                    Self::accumulate(&mut grads, *bias, gb);
                }
                OpRecord::Flatten { input, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gi = g.reshaped(self.value(*input).shape().to_vec())?;
                    Self::accumulate(&mut grads, *input, gi);
                }
                OpRecord::SegCrossEntropy { prob, out, labels, weights } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gp = ops::seg_cross_entropy_backward(self.value(*prob), labels, weights, g.item());
                    Self::accumulate(&mut grads, *prob, gp);
                }
                OpRecord::ClsCrossEntropy { prob, out, label, weights } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gp = ops::cls_cross_entropy_backward(self.value(*prob), *label, weights, g.item());
                    Self::accumulate(&mut grads, *prob, gp);
                }
                OpRecord::Sum { input, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let gi = Tensor::filled(self.value(*input).shape(), g.item());
                    Self::accumulate(&mut grads, *input, gi);
                }
                OpRecord::MeanScalars { inputs, out } => {
                    let Some(g) = grads[out.0].take() else { continue };
                    let share = g.item() / T::from_f64_lossy(inputs.len() as f64);
                    for id in inputs {
                        Self::accumulate(&mut grads, *id, Tensor::scalar(share));
                    }
                }
            }
        }

        // Leaves the loss never touched keep a zero gradient of their shape.
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_param && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

// ---------------------------------------------------------------------------
// finite-difference gradient checking
// ---------------------------------------------------------------------------

/// Settings for [`grad_check`].
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per parameter tensor (sampled
    /// deterministically); `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { step: 1e-4, max_coords_per_param: None, seed: 0 }
    }
}

/// Compare analytic gradients of a scalar-valued graph against central
/// finite differences, in f64. Returns the max over checked coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// `build` must construct the same graph for any parameter values; it is
/// re-invoked on a fresh tape for every perturbed evaluation.
pub fn grad_check<F>(params: &[Tensor<f64>], build: F, cfg: &GradCheck) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[NodeId]) -> Result<NodeId>,
{
    use rand::seq::SliceRandom;

    let eval = |theta: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = theta.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        Ok(tape.value(loss).item())
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut theta: Vec<Tensor<f64>> = params.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.wrt(*id);
        let n = params[pi].numel();
        let coords: Vec<usize> = match cfg.max_coords_per_param {
            Some(k) if k < n => {
                let mut rng = crate::rng::rng_from(cfg.seed, "grad-check", &[pi as u64]);
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(&mut rng);
                all.truncate(k);
                all
            }
            _ => (0..n).collect(),
        };
        for ci in coords {
            let orig = theta[pi].data()[ci];
            theta[pi].data_mut()[ci] = orig + cfg.step;
            let up = eval(&theta)?;
            theta[pi].data_mut()[ci] = orig - cfg.step;
            let down = eval(&theta)?;
            theta[pi].data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let a = analytic.data()[ci];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
