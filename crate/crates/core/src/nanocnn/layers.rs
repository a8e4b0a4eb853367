//! Layer kernels on HWC tensors.
//!
//! Convolutions are 3×3, stride 1, without padding; filters are stored as
//! `K × 3 × 3 × C`, so one filter is a contiguous `9C` row laid out in the
//! same `(ky, kx, c)` order as an input patch.

use rand::Rng;

use super::tensor::{gemm, Scalar, Tensor};

fn dims3<T: Scalar>(t: &Tensor<T>) -> (usize, usize, usize) {
    match *t.shape() {
        [h, w, c] => (h, w, c),
        ref s => panic!("expected an H×W×C tensor, got shape {s:?}"),
    }
}

fn check_filters<T: Scalar>(weights: &Tensor<T>, channels: usize) -> usize {
    match *weights.shape() {
        [k, 3, 3, c] if c == channels => k,
        ref s => panic!("filters of shape {s:?} do not match {channels} input channels"),
    }
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Element budget of one block of unrolled patches in [`conv2d`].
const PATCH_BLOCK: usize = 1 << 15;

/// Unrolls every 3×3 patch into one `9C` row, in filter order.
fn im2col<T: Scalar>(src: &[T], w: usize, c: usize, oh: usize, ow: usize) -> Vec<T> {
    let row = 3 * c;
    let mut out = Vec::with_capacity(oh * ow * 9 * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ky in 0..3 {
                let start = ((oy + ky) * w + ox) * c;
                out.extend_from_slice(&src[start..start + row]);
            }
        }
    }
    out
}

/// Valid 3×3 cross-correlation: `H×W×C` → `(H−2)×(W−2)×K`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = dims3(input);
    let k = check_filters(weights, c);
    assert!(h >= 3 && w >= 3, "conv2d needs at least a 3×3 input, got {h}×{w}");
    assert_eq!(bias.len(), k, "bias length must equal filter count");
    let (oh, ow) = (h - 2, w - 2);
    let p = 9 * c;
    let src = input.data();
    let mut out: Vec<T> = bias.data().iter().copied().cycle().take(oh * ow * k).collect();
    // A few output rows at a time keeps the unrolled patches cache-sized.
    let rows = (PATCH_BLOCK / (ow * p)).clamp(1, oh);
    let mut patches = Vec::with_capacity(rows * ow * p);
    for (bi, out_rows) in out.chunks_mut(rows * ow * k).enumerate() {
        let n = out_rows.len() / (ow * k);
        patches.clear();
        for oy in bi * rows..bi * rows + n {
            for ox in 0..ow {
                for ky in 0..3 {
                    let start = ((oy + ky) * w + ox) * c;
                    patches.extend_from_slice(&src[start..start + 3 * c]);
                }
            }
        }
        // out_rows (n·ow × k) += patches (n·ow × p) · weightsᵀ (p × k)
        gemm(n * ow, p, k, &patches, (p, 1), weights.data(), (1, p), T::one(), out_rows, (k, 1));
    }
    Tensor::from_vec(&[oh, ow, k], out)
}

/// Accumulates conv gradients. `grad_input`, when given, receives `∂L/∂input`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weights: &mut [T],
    grad_bias: &mut [T],
    grad_input: Option<&mut [T]>,
) {
    let (h, w, c) = dims3(input);
    let k = check_filters(weights, c);
    let (oh, ow) = (h - 2, w - 2);
    assert_eq!(grad_out.shape(), &[oh, ow, k]);
    let (m, p) = (oh * ow, 9 * c);
    let g = grad_out.data();
    for row in g.chunks_exact(k) {
        for (b, &gv) in grad_bias.iter_mut().zip(row) {
            *b += gv;
        }
    }
    let patches = im2col(input.data(), w, c, oh, ow);
    // grad_weights (k×p) += grad_outᵀ (k×m) · patches (m×p)
    gemm(k, m, p, g, (1, k), &patches, (p, 1), T::one(), grad_weights, (p, 1));
    if let Some(gin) = grad_input {
        assert_eq!(gin.len(), h * w * c, "grad_input length mismatch");
        let mut gp = vec![T::zero(); m * p];
        // grad_patches (m×p) = grad_out (m×k) · weights (k×p)
        gemm(m, k, p, g, (k, 1), weights.data(), (p, 1), T::zero(), &mut gp, (p, 1));
        let row = 3 * c;
        let mut rows = gp.chunks_exact(row);
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..3 {
                    let start = ((oy + ky) * w + ox) * c;
                    let src = rows.next().expect("one row per patch line");
                    for (d, &v) in gin[start..start + row].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Output extent of a pooling window sweep.
pub fn pooled_extent(extent: usize, window: usize, stride: usize) -> usize {
    assert!(window <= extent, "pool window {window} exceeds extent {extent}");
    (extent - window) / stride + 1
}

/// Max pooling; also returns, per output element, the flat input index of
/// the first maximum in `(ky, kx)` scan order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> (Tensor<T>, Vec<u32>) {
    let (h, w, c) = dims3(input);
    let (oh, ow) = (pooled_extent(h, window, stride), pooled_extent(w, window, stride));
    let src = input.data();
    let mut out = vec![T::neg_infinity(); oh * ow * c];
    let mut arg = vec![0u32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * c;
            for ky in 0..window {
                for kx in 0..window {
                    let at = ((oy * stride + ky) * w + ox * stride + kx) * c;
                    for ch in 0..c {
                        let v = src[at + ch];
                        if v > out[base + ch] {
                            out[base + ch] = v;
                            arg[base + ch] = (at + ch) as u32;
                        }
                    }
                }
            }
        }
    }
    (Tensor::from_vec(&[oh, ow, c], out), arg)
}

/// Max pooling values only.
pub fn maxpool2d_values<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Tensor<T> {
    let (h, w, c) = dims3(input);
    let (oh, ow) = (pooled_extent(h, window, stride), pooled_extent(w, window, stride));
    let src = input.data();
    let mut out = vec![T::neg_infinity(); oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * c..][..c];
            for ky in 0..window {
                let at = ((oy * stride + ky) * w + ox * stride) * c;
                for v in src[at..at + window * c].chunks_exact(c) {
                    for (m, &x) in o.iter_mut().zip(v) {
                        *m = if x > *m { x } else { *m };
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[oh, ow, c], out)
}

/// Routes each output gradient to its argmax input position.
pub fn maxpool2d_backward<T: Scalar>(grad_out: &Tensor<T>, argmax: &[u32], grad_input: &mut [T]) {
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        grad_input[i as usize] += g;
    }
}

/// `W x + b` with `W` stored `out × in`.
pub fn dense<T: Scalar>(input: &[T], weights: &Tensor<T>, bias: Option<&Tensor<T>>) -> Vec<T> {
    let (n_out, n_in) = match *weights.shape() {
        [o, i] => (o, i),
        ref s => panic!("dense weights must be 2-D, got {s:?}"),
    };
    assert_eq!(input.len(), n_in, "dense input length mismatch");
    weights
        .data()
        .chunks_exact(n_in)
        .enumerate()
        .map(|(o, row)| {
            let dot = row.iter().zip(input).fold(T::zero(), |acc, (&w, &x)| acc + w * x);
            dot + bias.map_or(T::zero(), |b| b.data()[o])
        })
        .take(n_out)
        .collect()
}

pub fn dense_backward<T: Scalar>(
    input: &[T],
    weights: &Tensor<T>,
    grad_out: &[T],
    grad_weights: &mut [T],
    grad_bias: Option<&mut [T]>,
    grad_input: Option<&mut [T]>,
) {
    let n_in = input.len();
    for (o, &g) in grad_out.iter().enumerate() {
        if g != T::zero() {
            axpy(g, input, &mut grad_weights[o * n_in..(o + 1) * n_in]);
        }
    }
    if let Some(gb) = grad_bias {
        for (b, &g) in gb.iter_mut().zip(grad_out) {
            *b += g;
        }
    }
    if let Some(gin) = grad_input {
        for (row, &g) in weights.data().chunks_exact(n_in).zip(grad_out) {
            if g != T::zero() {
                axpy(g, row, gin);
            }
        }
    }
}

pub fn relu<T: Scalar>(x: &mut [T]) {
    // A select rather than `max`, so NaN still propagates.
    for v in x {
        *v = if *v < T::zero() { T::zero() } else { *v };
    }
}

/// Zeroes gradients where the ReLU output was not positive.
pub fn relu_backward<T: Scalar>(output: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted-dropout keep mask: each unit survives with probability `1 − rate`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<bool> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if rate == 0.0 {
        return vec![true; len];
    }
    (0..len).map(|_| rng.gen::<f64>() >= rate).collect()
}

/// Applies a keep mask, scaling survivors by `1/(1 − rate)`. Used for both
/// the forward values and the backward gradients.
pub fn apply_dropout<T: Scalar>(x: &mut [T], mask: &[bool], rate: f64) {
    let scale = T::from_f64(1.0 / (1.0 - rate));
    for (v, &keep) in x.iter_mut().zip(mask) {
        *v = if keep { *v * scale } else { T::zero() };
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `(−log p[label], p)`; the logit gradient is `p − onehot(label)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    assert!(label < logits.len(), "label {label} out of range");
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits
        .iter()
        .map(|&z| (z - max).exp())
        .fold(T::zero(), |a, b| a + b);
    let log_z = max + sum.ln();
    let probs = logits.iter().map(|&z| (z - log_z).exp()).collect();
    (log_z - logits[label], probs)
}
