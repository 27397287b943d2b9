//! Forward and backward kernels for the operation set the two networks need:
//! same-padded convolution, 2x2 max pooling, 2x2 repetition upsampling,
//! channel concatenation, ELU, channel softmax, dense layers, and the two
//! weighted cross-entropy losses.
//!
//! Convolutions and dense layers lower onto a blocked GEMM (im2col for the
//! spatial case). Everything runs single-threaded in a fixed order, so
//! results are bit-reproducible on a given platform.

use crate::scalar::Scalar;
use crate::tensor::{shape_err, LabelMap, Result, Tensor, TensorError};

/// Floor for probabilities inside `log` so confident mistakes keep the loss
/// finite.
pub const PROB_CLAMP: f64 = 1e-12;

// ---------------------------------------------------------------------------
// conv2d, same padding, stride 1
// ---------------------------------------------------------------------------

fn conv_dims<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(shape_err("conv2d_same input", "[C,H,W]", format!("{:?}", input.shape())));
    }
    if kernels.rank() != 4 {
        return Err(shape_err("conv2d_same kernels", "[Cout,Cin,kH,kW]", format!("{:?}", kernels.shape())));
    }
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, kcin, kh, kw) = (
        kernels.shape()[0],
        kernels.shape()[1],
        kernels.shape()[2],
        kernels.shape()[3],
    );
    if kcin != cin {
        return Err(shape_err("conv2d_same channels", format!("kernels Cin = {cin}"), kcin));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(shape_err("conv2d_same kernel size", "odd kH,kW", format!("{kh}x{kw}")));
    }
    if bias.shape() != [cout] {
        return Err(shape_err("conv2d_same bias", format!("[{cout}]"), format!("{:?}", bias.shape())));
    }
    Ok((cin, h, w, cout, kh, kw))
}

/// Unfold `input` into `[Cin*kH*kW, H*W]` patch columns with zero padding.
fn im2col<T: Scalar>(input: &Tensor<T>, kh: usize, kw: usize) -> Vec<T> {
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    let mut cols = vec![T::zero(); cin * kh * kw * hw];
    for ci in 0..cin {
        let plane = input.channel(ci);
        for dy in 0..kh {
            for dx in 0..kw {
                let row = ((ci * kh + dy) * kw + dx) * hw;
                // x + dx - pw must land in 0..w, so x ranges over:
                let x0 = pw.saturating_sub(dx);
                let x1 = (w + pw).saturating_sub(dx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let iy = y + dy;
                    if iy < ph || iy >= h + ph {
                        continue;
                    }
                    let iy = iy - ph;
                    let src = &plane[iy * w + (x0 + dx - pw)..iy * w + (x1 + dx - pw)];
                    cols[row + y * w + x0..row + y * w + x1].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Fold `[Cin*kH*kW, H*W]` columns back into an image, summing overlaps.
fn col2im<T: Scalar>(cols: &[T], cin: usize, h: usize, w: usize, kh: usize, kw: usize) -> Tensor<T> {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    let mut out = Tensor::zeros(&[cin, h, w]);
    for ci in 0..cin {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = ((ci * kh + dy) * kw + dx) * hw;
                let x0 = pw.saturating_sub(dx);
                let x1 = (w + pw).saturating_sub(dx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let iy = y + dy;
                    if iy < ph || iy >= h + ph {
                        continue;
                    }
                    let iy = iy - ph;
                    let base = ci * hw + iy * w + (x0 + dx - pw);
                    let dst = &mut out.data_mut()[base..base + (x1 - x0)];
                    let src = &cols[row + y * w + x0..row + y * w + x1];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// Same-size cross-correlation with zero padding, stride 1.
pub fn conv2d_same<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (cin, h, w, cout, kh, kw) = conv_dims(input, kernels, bias)?;
    let hw = h * w;
    let mut out = Tensor::zeros(&[cout, h, w]);
    if kh == 1 && kw == 1 {
        T::gemm(cout, cin, hw, T::one(), kernels.data(), input.data(), T::zero(), out.data_mut());
    } else {
        let cols = im2col(input, kh, kw);
        T::gemm(cout, cin * kh * kw, hw, T::one(), kernels.data(), &cols, T::zero(), out.data_mut());
    }
    for co in 0..cout {
        let b = bias.data()[co];
        for v in &mut out.data_mut()[co * hw..(co + 1) * hw] {
            *v += b;
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_same`] w.r.t. input, kernels and bias.
pub fn conv2d_same_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, kh, kw) = (kernels.shape()[0], kernels.shape()[2], kernels.shape()[3]);
    let hw = h * w;
    let patch = cin * kh * kw;

    let mut grad_bias = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let mut acc = T::zero();
        for &g in &grad_out.data()[co * hw..(co + 1) * hw] {
            acc += g;
        }
        grad_bias.data_mut()[co] = acc;
    }

    let mut grad_kernels = Tensor::zeros(kernels.shape());
    let grad_input;
    if kh == 1 && kw == 1 {
        T::gemm_bt(cout, hw, cin, T::one(), grad_out.data(), input.data(), T::zero(), grad_kernels.data_mut());
        let mut gi = Tensor::zeros(&[cin, h, w]);
        T::gemm_at(cin, cout, hw, T::one(), kernels.data(), grad_out.data(), T::zero(), gi.data_mut());
        grad_input = gi;
    } else {
        let cols = im2col(input, kh, kw);
        T::gemm_bt(cout, hw, patch, T::one(), grad_out.data(), &cols, T::zero(), grad_kernels.data_mut());
        let mut grad_cols = vec![T::zero(); patch * hw];
        T::gemm_at(patch, cout, hw, T::one(), kernels.data(), grad_out.data(), T::zero(), &mut grad_cols);
        grad_input = col2im(&grad_cols, cin, h, w, kh, kw);
    }
    (grad_input, grad_kernels, grad_bias)
}

// ---------------------------------------------------------------------------
// 2x2 max pooling
// ---------------------------------------------------------------------------

/// Disjoint 2x2 window maximum. Ties go to the first element in row-major
/// window order; winner indices (flat into the input) are returned for the
/// backward pass.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    if input.rank() != 3 {
        return Err(shape_err("maxpool2 input", "[C,H,W]", format!("{:?}", input.shape())));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err("maxpool2 spatial size", "even H,W", format!("{h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut winners = vec![0u32; c * oh * ow];
    let data = input.data();
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let base = ci * h * w + 2 * y * w + 2 * x;
                let mut best_idx = base;
                let mut best = data[base];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = base + dy * w + dx;
                    if data[idx] > best {
                        best = data[idx];
                        best_idx = idx;
                    }
                }
                let o = ci * oh * ow + y * ow + x;
                out.data_mut()[o] = best;
                winners[o] = best_idx as u32;
            }
        }
    }
    Ok((out, winners))
}

pub fn maxpool2_backward<T: Scalar>(input_shape: &[usize], winners: &[u32], grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad = Tensor::zeros(input_shape);
    for (o, &wi) in winners.iter().enumerate() {
        grad.data_mut()[wi as usize] += grad_out.data()[o];
    }
    grad
}

// ---------------------------------------------------------------------------
// 2x2 upsampling by repetition
// ---------------------------------------------------------------------------

pub fn upsample2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.rank() != 3 {
        return Err(shape_err("upsample2 input", "[C,H,W]", format!("{:?}", input.shape())));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let mut out = Tensor::zeros(&[c, 2 * h, 2 * w]);
    for ci in 0..c {
        let src = input.channel(ci);
        let dst = &mut out.data_mut()[ci * 4 * h * w..(ci + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = src[y * w + x];
                let r0 = 2 * y * 2 * w + 2 * x;
                dst[r0] = v;
                dst[r0 + 1] = v;
                dst[r0 + 2 * w] = v;
                dst[r0 + 2 * w + 1] = v;
            }
        }
    }
    Ok(out)
}

/// Each source element collects the four gradients of its 2x2 block.
pub fn upsample2_backward<T: Scalar>(input_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let mut grad = Tensor::zeros(input_shape);
    for ci in 0..c {
        let src = grad_out.channel(ci);
        let dst = &mut grad.data_mut()[ci * h * w..(ci + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let r0 = 2 * y * 2 * w + 2 * x;
                dst[y * w + x] = src[r0] + src[r0 + 1] + src[r0 + 2 * w] + src[r0 + 2 * w + 1];
            }
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// channel concatenation
// ---------------------------------------------------------------------------

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 3 || b.rank() != 3 {
        return Err(shape_err("concat_channels", "[C,H,W] inputs", format!("{:?} / {:?}", a.shape(), b.shape())));
    }
    if a.shape()[1..] != b.shape()[1..] {
        return Err(shape_err(
            "concat_channels spatial",
            format!("{:?}", &a.shape()[1..]),
            format!("{:?}", &b.shape()[1..]),
        ));
    }
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new(vec![a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]], data)
}

pub fn concat_channels_backward<T: Scalar>(ca: usize, grad_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (c, h, w) = (grad_out.shape()[0], grad_out.shape()[1], grad_out.shape()[2]);
    let split = ca * h * w;
    let ga = Tensor::new(vec![ca, h, w], grad_out.data()[..split].to_vec()).expect("split shape");
    let gb = Tensor::new(vec![c - ca, h, w], grad_out.data()[split..].to_vec()).expect("split shape");
    (ga, gb)
}

// ---------------------------------------------------------------------------
// ELU (alpha = 1)
// ---------------------------------------------------------------------------

pub fn elu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x >= T::zero() { x } else { x.exp() - T::one() })
}

/// d/dx elu(x) is 1 for x >= 0 and elu(x) + 1 below.
pub fn elu_backward<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad = grad_out.clone();
    for ((g, &x), &y) in grad.data_mut().iter_mut().zip(input.data()).zip(output.data()) {
        if x < T::zero() {
            *g = *g * (y + T::one());
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// channel softmax
// ---------------------------------------------------------------------------

fn softmax_layout<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.rank() {
        1 => Ok((t.shape()[0], 1)),
        3 => Ok((t.shape()[0], t.shape()[1] * t.shape()[2])),
        _ => Err(shape_err("softmax_channels", "[C] or [C,H,W]", format!("{:?}", t.shape()))),
    }
}

/// Per-pixel softmax over the channel dimension, max-subtracted for
/// stability. Accepts `[C,H,W]` maps or rank-1 logit vectors.
pub fn softmax_channels<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, hw) = softmax_layout(logits)?;
    let mut out = Tensor::zeros(logits.shape());
    let src = logits.data();
    let dst = out.data_mut();
    for p in 0..hw {
        let mut m = src[p];
        for ci in 1..c {
            m = m.max(src[ci * hw + p]);
        }
        let mut sum = T::zero();
        for ci in 0..c {
            let e = (src[ci * hw + p] - m).exp();
            dst[ci * hw + p] = e;
            sum += e;
        }
        for ci in 0..c {
            dst[ci * hw + p] = dst[ci * hw + p] / sum;
        }
    }
    Ok(out)
}

pub fn softmax_channels_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, hw) = softmax_layout(output).expect("validated on forward");
    let mut grad = Tensor::zeros(output.shape());
    let p = output.data();
    let g = grad_out.data();
    let dst = grad.data_mut();
    for px in 0..hw {
        let mut dot = T::zero();
        for ci in 0..c {
            dot += g[ci * hw + px] * p[ci * hw + px];
        }
        for ci in 0..c {
            let i = ci * hw + px;
            dst[i] = p[i] * (g[i] - dot);
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// dense (affine) layer
// ---------------------------------------------------------------------------

pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    if input.rank() != 1 || weights.rank() != 2 {
        return Err(shape_err("dense", "vector input, matrix weights", format!("{:?} / {:?}", input.shape(), weights.shape())));
    }
    let (dout, din) = (weights.shape()[0], weights.shape()[1]);
    if input.shape()[0] != din {
        return Err(shape_err("dense input", format!("[{din}]"), format!("{:?}", input.shape())));
    }
    if bias.shape() != [dout] {
        return Err(shape_err("dense bias", format!("[{dout}]"), format!("{:?}", bias.shape())));
    }
    let mut out = bias.clone();
    T::gemm(dout, din, 1, T::one(), weights.data(), input.data(), T::one(), out.data_mut());
    Ok(out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (dout, din) = (weights.shape()[0], weights.shape()[1]);
    let mut grad_input = Tensor::zeros(&[din]);
    T::gemm_at(din, dout, 1, T::one(), weights.data(), grad_out.data(), T::zero(), grad_input.data_mut());
    let mut grad_weights = Tensor::zeros(&[dout, din]);
    T::gemm(dout, 1, din, T::one(), grad_out.data(), input.data(), T::zero(), grad_weights.data_mut());
    (grad_input, grad_weights, grad_out.clone())
}

// ---------------------------------------------------------------------------
// weighted cross-entropy losses
// ---------------------------------------------------------------------------

fn clamp_prob<T: Scalar>(p: T) -> T {
    p.max(T::from_f64_lossy(PROB_CLAMP))
}

/// Pixel-summed weighted cross entropy: `-sum_x w[l(x)] * ln p_{l(x)}(x)`.
pub fn seg_cross_entropy<T: Scalar>(prob: &Tensor<T>, labels: &LabelMap, weights: &[T]) -> Result<T> {
    if prob.rank() != 3 {
        return Err(shape_err("seg_cross_entropy prob", "[N,H,W]", format!("{:?}", prob.shape())));
    }
    let (n, h, w) = (prob.shape()[0], prob.shape()[1], prob.shape()[2]);
    if labels.height() != h || labels.width() != w {
        return Err(shape_err(
            "seg_cross_entropy labels",
            format!("{h}x{w}"),
            format!("{}x{}", labels.height(), labels.width()),
        ));
    }
    if weights.len() != n {
        return Err(shape_err("seg_cross_entropy weights", n, weights.len()));
    }
    let hw = h * w;
    let p = prob.data();
    let mut loss = T::zero();
    for (px, &l) in labels.data().iter().enumerate() {
        let l = l as usize;
        if l >= n {
            return Err(TensorError::Usage(format!("label {l} out of range 0..{n}")));
        }
        loss -= weights[l] * clamp_prob(p[l * hw + px]).ln();
    }
    Ok(loss)
}

/// d loss / d prob for [`seg_cross_entropy`], scaled by `upstream`.
///
/// Uses the unclamped-loss gradient `-w / p` (floored only at the smallest
/// positive value to survive exact softmax underflow). Through the softmax
/// this yields the fused logit gradient `w * (p - onehot)`, which keeps a
/// full restoring force on confidently wrong pixels; flooring at the 1e-12
/// forward clamp instead would let saturated predictions go gradient-dead.
pub fn seg_cross_entropy_backward<T: Scalar>(
    prob: &Tensor<T>,
    labels: &LabelMap,
    weights: &[T],
    upstream: T,
) -> Tensor<T> {
    let (n, h, w) = (prob.shape()[0], prob.shape()[1], prob.shape()[2]);
    let hw = h * w;
    let mut grad = Tensor::zeros(&[n, h, w]);
    for (px, &l) in labels.data().iter().enumerate() {
        let l = l as usize;
        let p = prob.data()[l * hw + px].max(T::min_positive_value());
        grad.data_mut()[l * hw + px] = -upstream * weights[l] / p;
    }
    grad
}

/// Single-sample two-class weighted cross entropy: `-w[l] * ln p[l]`.
pub fn cls_cross_entropy<T: Scalar>(prob: &Tensor<T>, label: usize, weights: &[T; 2]) -> Result<T> {
    if prob.rank() != 1 || prob.shape()[0] != 2 {
        return Err(shape_err("cls_cross_entropy prob", "[2]", format!("{:?}", prob.shape())));
    }
    if label > 1 {
        return Err(TensorError::Usage(format!("class label {label} out of range 0..2")));
    }
    Ok(-weights[label] * clamp_prob(prob.data()[label]).ln())
}

pub fn cls_cross_entropy_backward<T: Scalar>(prob: &Tensor<T>, label: usize, weights: &[T; 2], upstream: T) -> Tensor<T> {
    let mut grad = Tensor::zeros(&[2]);
    let p = prob.data()[label].max(T::min_positive_value());
    grad.data_mut()[label] = -upstream * weights[label] / p;
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(vec![c, h, w], data).unwrap()
    }

    /// Direct nested-loop zero-padded correlation, the conv oracle.
    fn conv_naive(input: &Tensor<f64>, kernels: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
        let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (cout, kh, kw) = (kernels.shape()[0], kernels.shape()[2], kernels.shape()[3]);
        let (ph, pw) = (kh / 2, kw / 2);
        let mut out = Tensor::zeros(&[cout, h, w]);
        for co in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias.data()[co];
                    for ci in 0..cin {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let (iy, ix) = (y + dy, x + dx);
                                if iy < ph || ix < pw || iy >= h + ph || ix >= w + pw {
                                    continue;
                                }
                                let iv = input.data()[ci * h * w + (iy - ph) * w + (ix - pw)];
                                let kv = kernels.data()[((co * cin + ci) * kh + dy) * kw + dx];
                                acc += iv * kv;
                            }
                        }
                    }
                    out.data_mut()[co * h * w + y * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let input = Tensor::<f64>::from_fn(&[1, 4, 4], |i| i as f64 * 0.5 - 3.0);
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_same(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_zero_input_yields_bias_planes() {
        let input = Tensor::<f64>::zeros(&[2, 8, 8]);
        let kernels = Tensor::from_fn(&[3, 2, 3, 3], |i| (i as f64).cos());
        let bias = Tensor::new(vec![3], vec![0.5, -1.25, 2.0]).unwrap();
        let out = conv2d_same(&input, &kernels, &bias).unwrap();
        for co in 0..3 {
            assert!(out.channel(co).iter().all(|&v| v == bias.data()[co]));
        }
    }

    #[test]
    fn conv_all_ones_3x3_hand_case() {
        let input = t3(1, 3, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let kernels = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_same(&input, &kernels, &bias).unwrap();
        // Zero-padded correlation: center sums everything, corner (0,0)
        // sums the 2x2 block 1+2+4+5.
        assert_eq!(out.data()[4], 45.0);
        assert_eq!(out.data()[0], 12.0);
    }

    #[test]
    fn conv_matches_naive_oracle_on_random_shapes() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(11, "conv-oracle", &[]);
        for case in 0..12u64 {
            let cin = 1 + (case as usize % 3);
            let cout = 1 + ((case as usize / 3) % 4);
            let (h, w) = (2 + case as usize % 5, 3 + case as usize % 4);
            let k = if case % 2 == 0 { 3 } else { 1 };
            let input = Tensor::<f64>::from_fn(&[cin, h, w], |_| rng.gen_range(-1.0..1.0));
            let kernels = Tensor::from_fn(&[cout, cin, k, k], |_| rng.gen_range(-1.0..1.0));
            let bias = Tensor::from_fn(&[cout], |_| rng.gen_range(-1.0..1.0));
            let fast = conv2d_same(&input, &kernels, &bias).unwrap();
            let slow = conv_naive(&input, &kernels, &bias);
            assert!(fast.max_abs_diff(&slow) < 1e-12, "case {case}");
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f32>::zeros(&[2, 4, 4]);
        let kernels = Tensor::zeros(&[1, 3, 3, 3]);
        let bias = Tensor::zeros(&[1]);
        assert!(matches!(
            conv2d_same(&input, &kernels, &bias),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn maxpool_single_window() {
        let input = t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let (out, winners) = maxpool2(&input).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(winners, vec![3]);
    }

    #[test]
    fn maxpool_tie_takes_first_in_window_order() {
        let input = Tensor::<f64>::filled(&[1, 4, 4], 7.0);
        let (out, winners) = maxpool2(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
        // First element of each 2x2 window, row-major.
        assert_eq!(winners, vec![0, 2, 8, 10]);
    }

    #[test]
    fn maxpool_1_to_16_case() {
        let input = Tensor::<f64>::from_fn(&[1, 4, 4], |i| (i + 1) as f64);
        let (out, _) = maxpool2(&input).unwrap();
        assert_eq!(out.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn maxpool_rejects_odd_size() {
        let input = Tensor::<f32>::zeros(&[1, 3, 4]);
        assert!(maxpool2(&input).is_err());
    }

    #[test]
    fn upsample_repeats_blocks() {
        let input = t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let out = upsample2(&input).unwrap();
        #[rustfmt::skip]
        let expect = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(out.data(), &expect[..]);
    }

    #[test]
    fn upsample_then_maxpool_is_identity() {
        let input = Tensor::<f64>::from_fn(&[2, 3, 5], |i| (i as f64).sin());
        let (back, _) = maxpool2(&upsample2(&input).unwrap()).unwrap();
        assert_eq!(back.data(), input.data());
    }

    #[test]
    fn upsample_backward_sums_four() {
        let grad_out = Tensor::<f64>::filled(&[1, 4, 4], 1.0);
        let grad = upsample2_backward(&[1, 2, 2], &grad_out);
        assert!(grad.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn concat_orders_a_then_b() {
        let a = t3(1, 2, 2, vec![1.0; 4]);
        let b = t3(2, 2, 2, vec![2.0; 8]);
        let out = concat_channels(&a, &b).unwrap();
        assert_eq!(out.shape(), &[3, 2, 2]);
        assert_eq!(out.channel(0), a.channel(0));
        assert!(out.channel(1).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros(&[1, 2, 2]);
        let b = Tensor::<f32>::zeros(&[1, 2, 4]);
        assert!(concat_channels(&a, &b).is_err());
    }

    #[test]
    fn elu_branches() {
        let x = Tensor::new(vec![3], vec![0.0, 1.0, -1.0]).unwrap();
        let y = elu(&x);
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[1], 1.0);
        assert!((y.data()[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((y.data()[2] + 0.63212).abs() < 1e-5);
    }

    #[test]
    fn softmax_symmetry_and_closed_form() {
        let p = softmax_channels(&Tensor::<f64>::new(vec![2], vec![0.0, 0.0]).unwrap()).unwrap();
        assert!((p.data()[0] - 0.5).abs() < 1e-12);

        let p = softmax_channels(&Tensor::new(vec![2], vec![2.0f64.ln(), 0.0]).unwrap()).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance_per_pixel() {
        let logits = Tensor::<f64>::from_fn(&[3, 2, 2], |i| (i as f64) * 0.3 - 1.0);
        let mut shifted = logits.clone();
        // Add a constant to every channel of pixel (0,1).
        for c in 0..3 {
            shifted.data_mut()[c * 4 + 1] += 5.0;
        }
        let a = softmax_channels(&logits).unwrap();
        let b = softmax_channels(&shifted).unwrap();
        for c in 0..3 {
            assert!((a.data()[c * 4 + 1] - b.data()[c * 4 + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_hand_case() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        let y = dense(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn dense_identity_and_zero_input() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(vec![2], vec![0.25, -0.5]).unwrap();
        let x = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        assert_eq!(dense(&x, &w, &Tensor::zeros(&[2])).unwrap().data(), x.data());
        let zero = Tensor::zeros(&[2]);
        assert_eq!(dense(&zero, &w, &b).unwrap().data(), b.data());
    }

    #[test]
    fn dense_rejects_dim_mismatch() {
        let w = Tensor::<f32>::zeros(&[2, 3]);
        let x = Tensor::<f32>::zeros(&[2]);
        assert!(dense(&x, &w, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn seg_loss_single_pixel_closed_form() {
        let prob = t3(2, 1, 1, vec![0.5, 0.5]);
        let labels = LabelMap::new(1, 1, vec![0]).unwrap();
        let loss = seg_cross_entropy(&prob, &labels, &[1.0, 1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn seg_loss_linear_in_weights() {
        let prob = Tensor::<f64>::from_fn(&[3, 2, 2], |i| 1.0 / 3.0 + (i as f64) * 0.0);
        let labels = LabelMap::new(2, 2, vec![0, 1, 2, 1]).unwrap();
        let w1 = [0.3, 0.5, 0.7];
        let w2 = [0.6, 1.0, 1.4];
        let l1 = seg_cross_entropy(&prob, &labels, &w1).unwrap();
        let l2 = seg_cross_entropy(&prob, &labels, &w2).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn seg_loss_rejects_out_of_range_label() {
        let prob = t3(2, 1, 1, vec![0.5, 0.5]);
        let labels = LabelMap::new(1, 1, vec![2]).unwrap();
        assert!(seg_cross_entropy(&prob, &labels, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cls_loss_closed_forms() {
        let sure = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap();
        assert_eq!(cls_cross_entropy(&sure, 1, &[1.0, 1.0]).unwrap(), 0.0);

        let p = Tensor::new(vec![2], vec![0.25, 0.75]).unwrap();
        let loss = cls_cross_entropy(&p, 0, &[0.5, 1.0]).unwrap();
        assert!((loss - 0.5 * 4.0f64.ln()).abs() < 1e-12);
        // Proportional to the weight.
        let loss2 = cls_cross_entropy(&p, 0, &[1.0, 1.0]).unwrap();
        assert!((loss2 - 2.0 * loss).abs() < 1e-12);
    }

    #[test]
    fn perfect_one_hot_seg_loss_is_tiny() {
        let n = 3;
        let (h, w) = (4, 4);
        let labels = LabelMap::new(h, w, (0..16).map(|i| (i % n) as u8).collect()).unwrap();
        let mut prob = Tensor::<f64>::zeros(&[n, h, w]);
        for (px, &l) in labels.data().iter().enumerate() {
            prob.data_mut()[l as usize * h * w + px] = 1.0;
        }
        let loss = seg_cross_entropy(&prob, &labels, &[1.0; 3]).unwrap();
        assert!(loss.abs() < 1e-9);
    }
}
