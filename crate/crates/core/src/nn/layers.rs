//! Layer kernels with their backward passes.

use rand::Rng as _;

use super::tensor::{axpy, dot, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of 1: output keeps `h × w`.
    Same,
    /// No padding: output is `(h - 2) × (w - 2)`.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Unrolled 3×3 neighbourhoods: `(c·9) × (oh·ow)`, row-major.
pub(crate) struct Cols<T> {
    pub data: Vec<T>,
    pub oh: usize,
    pub ow: usize,
}

pub(crate) fn im2col<T: Scalar>(x: &Tensor<T>, padding: Padding) -> Result<Cols<T>> {
    let (c, h, w) = x.chw()?;
    let (pad, oh, ow) = match padding {
        Padding::Same => (1i64, h, w),
        Padding::Valid => {
            if h < 3 || w < 3 {
                return Err(Error::ShapeMismatch(format!(
                    "valid 3x3 convolution needs at least 3x3 input, got {h}x{w}"
                )));
            }
            (0, h - 2, w - 2)
        }
    };
    let n = oh * ow;
    let mut data = vec![T::zero(); c * 9 * n];
    let src = x.data();
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut data[((ch * 9) + ky * 3 + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = oy as i64 + ky as i64 - pad;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * ow..][..ow];
                    let dx = kx as i64 - pad;
                    // valid output columns: 0 <= ox + dx < w
                    let lo = (-dx).max(0) as usize;
                    let hi = ((w as i64 - dx).min(ow as i64)).max(0) as usize;
                    if lo < hi {
                        let s0 = (lo as i64 + dx) as usize;
                        dst[lo..hi].copy_from_slice(&src_row[s0..s0 + (hi - lo)]);
                    }
                }
            }
        }
    }
    Ok(Cols { data, oh, ow })
}

fn col2im<T: Scalar>(dcols: &[T], shape: (usize, usize, usize), padding: Padding, oh: usize, ow: usize) -> Tensor<T> {
    let (c, h, w) = shape;
    let pad = match padding {
        Padding::Same => 1i64,
        Padding::Valid => 0,
    };
    let n = oh * ow;
    let mut dx = Tensor::zeros(vec![c, h, w]);
    let out = dx.data_mut();
    for ch in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &dcols[((ch * 9) + ky * 3 + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = oy as i64 + ky as i64 - pad;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    let dst = &mut out[ch * h * w + iy as usize * w..][..w];
                    let src = &row[oy * ow..][..ow];
                    let dxo = kx as i64 - pad;
                    let lo = (-dxo).max(0) as usize;
                    let hi = ((w as i64 - dxo).min(ow as i64)).max(0) as usize;
                    for ox in lo..hi {
                        let ix = (ox as i64 + dxo) as usize;
                        dst[ix] = dst[ix] + src[ox];
                    }
                }
            }
        }
    }
    dx
}

fn check_kernels<T: Scalar>(x: &Tensor<T>, kernels: &Tensor<T>, bias: &[T]) -> Result<(usize, usize)> {
    let (c, _, _) = x.chw()?;
    match kernels.shape()[..] {
        [o, kc, 3, 3] if kc == c && bias.len() == o => Ok((o, c)),
        _ => Err(Error::ShapeMismatch(format!(
            "kernels {:?} / bias {} do not fit input {:?}",
            kernels.shape(),
            bias.len(),
            x.shape()
        ))),
    }
}

/// Stride-1 3×3 cross-correlation. `kernels` has shape `(out, in, 3, 3)`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, kernels: &Tensor<T>, bias: &[T], padding: Padding) -> Result<Tensor<T>> {
    let (o, _) = check_kernels(x, kernels, bias)?;
    let cols = im2col(x, padding)?;
    Ok(conv_from_cols(&cols, kernels.data(), bias, o))
}

pub(crate) fn conv_from_cols<T: Scalar>(cols: &Cols<T>, kernels: &[T], bias: &[T], o: usize) -> Tensor<T> {
    let n = cols.oh * cols.ow;
    let k = kernels.len() / o;
    let mut y = vec![T::zero(); o * n];
    for oc in 0..o {
        let out = &mut y[oc * n..(oc + 1) * n];
        out.fill(bias[oc]);
        let wrow = &kernels[oc * k..(oc + 1) * k];
        for (ki, &wv) in wrow.iter().enumerate() {
            if wv != T::zero() {
                axpy(wv, &cols.data[ki * n..(ki + 1) * n], out);
            }
        }
    }
    Tensor::new(vec![o, cols.oh, cols.ow], y).expect("conv output shape")
}

/// Gradients of a convolution.
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dkernels: Vec<T>,
    pub dbias: Vec<T>,
}

pub(crate) fn conv_backward_cols<T: Scalar>(
    cols: &Cols<T>,
    in_shape: (usize, usize, usize),
    kernels: &[T],
    padding: Padding,
    dy: &[T],
    o: usize,
    need_dx: bool,
) -> ConvGrads<T> {
    let n = cols.oh * cols.ow;
    let k = kernels.len() / o;
    let mut dkernels = vec![T::zero(); kernels.len()];
    let mut dbias = vec![T::zero(); o];
    for oc in 0..o {
        let g = &dy[oc * n..(oc + 1) * n];
        dbias[oc] = g.iter().copied().sum();
        for ki in 0..k {
            dkernels[oc * k + ki] = dot(g, &cols.data[ki * n..(ki + 1) * n]);
        }
    }
    let dx = need_dx.then(|| {
        let mut dcols = vec![T::zero(); k * n];
        for oc in 0..o {
            let g = &dy[oc * n..(oc + 1) * n];
            for ki in 0..k {
                let wv = kernels[oc * k + ki];
                if wv != T::zero() {
                    axpy(wv, g, &mut dcols[ki * n..(ki + 1) * n]);
                }
            }
        }
        col2im(&dcols, in_shape, padding, cols.oh, cols.ow)
    });
    ConvGrads { dx, dkernels, dbias }
}

/// Backward pass of [`conv2d`] given upstream gradient `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    padding: Padding,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let o = kernels.shape()[0];
    let cols = im2col(x, padding)?;
    if dy.len() != o * cols.oh * cols.ow {
        return Err(Error::ShapeMismatch(format!("dy {:?}", dy.shape())));
    }
    Ok(conv_backward_cols(&cols, x.chw()?, kernels.data(), padding, dy.data(), o, true))
}

/// Positions (flat input indices) of each pooled maximum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndex {
    pub in_shape: (usize, usize, usize),
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Odd sides are padded by edge replication,
/// so the last window on that side covers just the edge pixel.
pub fn maxpool2x2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndex)> {
    let (c, h, w) = x.chw()?;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let src = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let (iy, ix) = ((2 * oy + dy).min(h - 1), (2 * ox + dx).min(w - 1));
                    let i = base + iy * w + ix;
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        PoolIndex {
            in_shape: (c, h, w),
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward<T: Scalar>(idx: &PoolIndex, dy: &[T]) -> Tensor<T> {
    let (c, h, w) = idx.in_shape;
    let mut dx = Tensor::zeros(vec![c, h, w]);
    let d = dx.data_mut();
    for (&i, &g) in idx.argmax.iter().zip(dy) {
        d[i] = d[i] + g;
    }
    dx
}

/// `W·x + b` with `W` of shape `(out, in)` stored row-major.
pub fn dense<T: Scalar>(x: &[T], weights: &[T], bias: &[T]) -> Result<Vec<T>> {
    let out = bias.len();
    if out == 0 || weights.len() != out * x.len() {
        return Err(Error::ShapeMismatch(format!(
            "dense weights {} for {} inputs and {out} outputs",
            weights.len(),
            x.len()
        )));
    }
    let n = x.len();
    Ok((0..out)
        .map(|o| bias[o] + dot(&weights[o * n..(o + 1) * n], x))
        .collect())
}

pub struct DenseGrads<T> {
    pub dx: Vec<T>,
    pub dweights: Vec<T>,
    pub dbias: Vec<T>,
}

pub fn dense_backward<T: Scalar>(x: &[T], weights: &[T], dy: &[T], need_dx: bool) -> DenseGrads<T> {
    let n = x.len();
    let mut dweights = vec![T::zero(); weights.len()];
    let mut dx = vec![T::zero(); if need_dx { n } else { 0 }];
    for (o, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        axpy(g, x, &mut dweights[o * n..(o + 1) * n]);
        if need_dx {
            axpy(g, &weights[o * n..(o + 1) * n], &mut dx);
        }
    }
    DenseGrads {
        dx,
        dweights,
        dbias: dy.to_vec(),
    }
}

pub fn relu<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Passes gradient where the forward output was positive.
pub fn relu_backward<T: Scalar>(y: &[T], dy: &mut [T]) {
    for (g, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// (`0` or `1 / (1 - rate)`) used for the backward pass.
pub fn dropout<T: Scalar>(x: &[T], rate: f64, mode: Mode, rng: &mut Rng) -> (Vec<T>, Option<Vec<T>>) {
    if mode == Mode::Infer || rate == 0.0 {
        return (x.to_vec(), None);
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = x
        .iter()
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let y = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (y, Some(mask))
}

/// Softmax (max-subtracted) and cross-entropy `-ln p[target]`.
pub fn softmax_xent<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let probs = softmax(logits);
    let p = probs[target];
    let loss = if p > T::zero() {
        -p.ln()
    } else {
        // log-sum-exp route when p underflows
        let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
        lse - logits[target]
    };
    (loss, probs)
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of [`softmax_xent`] with respect to the logits.
pub fn softmax_xent_grad<T: Scalar>(probs: &[T], target: usize) -> Vec<T> {
    let mut g = probs.to_vec();
    g[target] = g[target] - T::one();
    g
}
