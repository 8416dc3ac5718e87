//! Layer primitives with hand-written backward passes.
//!
//! Convolutions lower to im2col + GEMM. Transposed convolution reuses the
//! same lowering: its forward pass is the input-gradient of a convolution
//! and its input-gradient is a convolution.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::gemm::{gemm, MatRef};
use crate::image::{LabelImage, ScoreKind, ScoreMap};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Upper bound on the im2col buffer, in elements, before output rows are banded.
const COLS_BUDGET: usize = 1 << 22;

/// Spatial zero padding (for transposed convolution: output cropping).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    pub const fn new(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        Self {
            top,
            bottom,
            left,
            right,
        }
    }
}

/// Weights and bias of one (transposed) convolution.
///
/// Convolution weights are `outC×inC×kH×kW`; transposed-convolution weights
/// are `inC×outC×kH×kW`. The bias, when present, has one entry per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub pad: Padding,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Option<Tensor>, stride: usize, pad: Padding) -> Result<Self> {
        weights.dims4()?;
        if stride == 0 {
            return Err(invalid!("stride must be positive"));
        }
        Ok(Self {
            weights,
            bias,
            stride,
            pad,
        })
    }

    fn check_bias(&self, channels: usize) -> Result<()> {
        match &self.bias {
            Some(b) if b.shape() != [channels] => Err(shape_err!(
                "bias shape {:?} does not match {channels} output channels",
                b.shape()
            )),
            _ => Ok(()),
        }
    }

    fn kernel(&self) -> (usize, usize) {
        let s = self.weights.shape();
        (s[2], s[3])
    }
}

/// Gradients of one layer. `d_bias` is `None` exactly when the layer has no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub d_weights: Tensor,
    pub d_bias: Option<Tensor>,
    pub d_input: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: Padding,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn conv(channels: usize, h: usize, w: usize, p: &ConvParams) -> Result<Self> {
        let (kh, kw) = p.kernel();
        Self::new(channels, h, w, kh, kw, p.stride, p.pad)
    }

    fn new(channels: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: Padding) -> Result<Self> {
        let ph = h + pad.top + pad.bottom;
        let pw = w + pad.left + pad.right;
        if ph < kh || pw < kw {
            return Err(shape_err!(
                "kernel {kh}×{kw} larger than padded input {ph}×{pw}"
            ));
        }
        Ok(Self {
            channels,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh: (ph - kh) / stride + 1,
            ow: (pw - kw) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn band_rows(&self) -> usize {
        (COLS_BUDGET / (self.patch() * self.ow).max(1)).clamp(1, self.oh)
    }

    fn src(&self, out: usize, k: usize, pad_before: usize, extent: usize) -> Option<usize> {
        (out * self.stride + k)
            .checked_sub(pad_before)
            .filter(|&i| i < extent)
    }

    /// Unfolds output rows `r0..r1` into a `patch × ((r1-r0)·ow)` matrix.
    fn im2col(&self, x: &[f32], r0: usize, r1: usize, cols: &mut Vec<f32>) {
        let n = (r1 - r0) * self.ow;
        cols.clear();
        cols.resize(self.patch() * n, 0.0);
        for c in 0..self.channels {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for u in 0..self.kh {
                for v in 0..self.kw {
                    let row = ((c * self.kh + u) * self.kw + v) * n;
                    for r in r0..r1 {
                        let Some(iy) = self.src(r, u, self.pad.top, self.h) else {
                            continue;
                        };
                        let dst = &mut cols[row + (r - r0) * self.ow..row + (r - r0 + 1) * self.ow];
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        for (j, d) in dst.iter_mut().enumerate() {
                            if let Some(ix) = self.src(j, v, self.pad.left, self.w) {
                                *d = src[ix];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters-adds columns back into `x`.
    fn col2im_add(&self, cols: &[f32], r0: usize, r1: usize, x: &mut [f32]) {
        let n = (r1 - r0) * self.ow;
        for c in 0..self.channels {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for u in 0..self.kh {
                for v in 0..self.kw {
                    let row = ((c * self.kh + u) * self.kw + v) * n;
                    for r in r0..r1 {
                        let Some(iy) = self.src(r, u, self.pad.top, self.h) else {
                            continue;
                        };
                        let src = &cols[row + (r - r0) * self.ow..row + (r - r0 + 1) * self.ow];
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for (j, &g) in src.iter().enumerate() {
                            if let Some(ix) = self.src(j, v, self.pad.left, self.w) {
                                dst[ix] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn add_bias(out: &mut [f32], bias: Option<&Tensor>, plane: usize) {
    if let Some(b) = bias {
        for (o, &bv) in b.data().iter().enumerate() {
            out[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn channel_sums(t: &[f32], channels: usize, plane: usize) -> Vec<f32> {
    (0..channels)
        .map(|o| t[o * plane..(o + 1) * plane].iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect()
}

/// Correlation of `x` (`inC×H×W`) with `weights` (`outC×inC×kH×kW`), no bias.
fn correlate(x: &Tensor, weights: &Tensor, stride: usize, pad: Padding) -> Result<(Tensor, Geometry)> {
    let (c, h, w) = x.dims3()?;
    let (oc, ic, kh, kw) = weights.dims4()?;
    if ic != c {
        return Err(shape_err!("input has {c} channels, kernel expects {ic}"));
    }
    let g = Geometry::new(c, h, w, kh, kw, stride, pad)?;
    let plane = g.oh * g.ow;
    let mut out = vec![0.0f32; oc * plane];
    let wmat = MatRef::row_major(weights.data(), oc, g.patch());
    let band = g.band_rows();
    let mut cols = Vec::new();
    let mut r0 = 0;
    while r0 < g.oh {
        let r1 = (r0 + band).min(g.oh);
        g.im2col(x.data(), r0, r1, &mut cols);
        let n = (r1 - r0) * g.ow;
        gemm(
            wmat,
            MatRef::row_major(&cols, g.patch(), n),
            0.0,
            &mut out[r0 * g.ow..],
            plane,
        );
        r0 = r1;
    }
    let t = Tensor::from_vec(&[oc, g.oh, g.ow], out)?;
    Ok((t, g))
}

/// 2-D convolution (cross-correlation) with zero padding.
pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let (oc, _, _, _) = p.weights.dims4()?;
    p.check_bias(oc)?;
    let (mut out, g) = correlate(x, &p.weights, p.stride, p.pad)?;
    add_bias(out.data_mut(), p.bias.as_ref(), g.oh * g.ow);
    Ok(out)
}

pub fn conv2d_backward(x: &Tensor, p: &ConvParams, d_out: &Tensor) -> Result<GradPair> {
    let (c, h, w) = x.dims3()?;
    let (oc, ic, _, _) = p.weights.dims4()?;
    if ic != c {
        return Err(shape_err!("input has {c} channels, kernel expects {ic}"));
    }
    p.check_bias(oc)?;
    let g = Geometry::conv(c, h, w, p)?;
    if d_out.shape() != [oc, g.oh, g.ow] {
        return Err(shape_err!(
            "output gradient {:?} does not match forward output {:?}",
            d_out.shape(),
            [oc, g.oh, g.ow]
        ));
    }
    let plane = g.oh * g.ow;
    let k = g.patch();
    let mut d_w = vec![0.0f32; oc * k];
    let mut d_x = vec![0.0f32; c * h * w];
    let wmat = MatRef::row_major(p.weights.data(), oc, k);
    let band = g.band_rows();
    let mut cols = Vec::new();
    let mut d_cols = Vec::new();
    let mut r0 = 0;
    while r0 < g.oh {
        let r1 = (r0 + band).min(g.oh);
        let n = (r1 - r0) * g.ow;
        let d_band = MatRef {
            data: &d_out.data()[r0 * g.ow..],
            rows: oc,
            cols: n,
            row_stride: plane,
            col_stride: 1,
        };
        g.im2col(x.data(), r0, r1, &mut cols);
        gemm(d_band, MatRef::row_major(&cols, k, n).t(), 1.0, &mut d_w, k);
        d_cols.clear();
        d_cols.resize(k * n, 0.0);
        gemm(wmat.t(), d_band, 0.0, &mut d_cols, n);
        g.col2im_add(&d_cols, r0, r1, &mut d_x);
        r0 = r1;
    }
    Ok(GradPair {
        d_weights: Tensor::from_vec(p.weights.shape(), d_w)?,
        d_bias: p
            .bias
            .as_ref()
            .map(|_| Tensor::from_vec(&[oc], channel_sums(d_out.data(), oc, plane)))
            .transpose()?,
        d_input: Tensor::from_vec(&[c, h, w], d_x)?,
    })
}

/// Output size of a transposed convolution along one axis.
pub fn tconv_output_size(input: usize, kernel: usize, stride: usize, pad_before: usize, pad_after: usize) -> Result<usize> {
    ((input - 1) * stride + kernel)
        .checked_sub(pad_before + pad_after)
        .filter(|&s| s > 0)
        .ok_or_else(|| shape_err!("transposed convolution crops away the whole output"))
}

fn tconv_geometry(x: &Tensor, p: &ConvParams) -> Result<Geometry> {
    let (c, h, w) = x.dims3()?;
    let (ic, oc, kh, kw) = p.weights.dims4()?;
    if ic != c {
        return Err(shape_err!("input has {c} channels, kernel expects {ic}"));
    }
    p.check_bias(oc)?;
    let geo = Geometry {
        channels: oc,
        h: tconv_output_size(h, kh, p.stride, p.pad.top, p.pad.bottom)?,
        w: tconv_output_size(w, kw, p.stride, p.pad.left, p.pad.right)?,
        kh,
        kw,
        stride: p.stride,
        pad: p.pad,
        oh: h,
        ow: w,
    };
    Ok(geo)
}

/// Transposed convolution: `H' = (H−1)·stride − padTop − padBottom + kH`.
pub fn tconv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let g = tconv_geometry(x, p)?;
    let (ic, oc, _, _) = p.weights.dims4()?;
    let k = g.patch();
    let n = g.oh * g.ow;
    let mut cols = vec![0.0f32; k * n];
    gemm(
        MatRef::row_major(p.weights.data(), ic, k).t(),
        MatRef::row_major(x.data(), ic, n),
        0.0,
        &mut cols,
        n,
    );
    let mut out = vec![0.0f32; oc * g.h * g.w];
    g.col2im_add(&cols, 0, g.oh, &mut out);
    add_bias(&mut out, p.bias.as_ref(), g.h * g.w);
    Tensor::from_vec(&[oc, g.h, g.w], out)
}

pub fn tconv2d_backward(x: &Tensor, p: &ConvParams, d_out: &Tensor) -> Result<GradPair> {
    let g = tconv_geometry(x, p)?;
    let (ic, oc, _, _) = p.weights.dims4()?;
    if d_out.shape() != [oc, g.h, g.w] {
        return Err(shape_err!(
            "output gradient {:?} does not match forward output {:?}",
            d_out.shape(),
            [oc, g.h, g.w]
        ));
    }
    let k = g.patch();
    let n = g.oh * g.ow;
    let mut cols = Vec::new();
    g.im2col(d_out.data(), 0, g.oh, &mut cols);
    let cols = MatRef::row_major(&cols, k, n);
    let mut d_w = vec![0.0f32; ic * k];
    gemm(MatRef::row_major(x.data(), ic, n), cols.t(), 0.0, &mut d_w, k);
    let mut d_x = vec![0.0f32; ic * n];
    gemm(MatRef::row_major(p.weights.data(), ic, k), cols, 0.0, &mut d_x, n);
    Ok(GradPair {
        d_weights: Tensor::from_vec(p.weights.shape(), d_w)?,
        d_bias: p
            .bias
            .as_ref()
            .map(|_| Tensor::from_vec(&[oc], channel_sums(d_out.data(), oc, g.h * g.w)))
            .transpose()?,
        d_input: Tensor::from_vec(x.shape(), d_x)?,
    })
}

/// Winning input positions of a 2×2 max pool, one per output element,
/// as offsets inside the channel plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: [usize; 3],
    output_shape: [usize; 3],
    argmax: Vec<u32>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }
}

/// 2×2/stride-2 max pooling; odd borders use truncated windows
/// and ties go to the first position in row-major order.
pub fn maxpool2x2_forward(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let (c, h, w) = x.dims3()?;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    let data = x.data();
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let mut best = (2 * i) * w + 2 * j;
                for r in 2 * i..(2 * i + 2).min(h) {
                    for q in 2 * j..(2 * j + 2).min(w) {
                        if plane[r * w + q] > plane[best] {
                            best = r * w + q;
                        }
                    }
                }
                out.push(plane[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c, oh, ow], out)?,
        PoolIndices {
            input_shape: [c, h, w],
            output_shape: [c, oh, ow],
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward(indices: &PoolIndices, d_out: &Tensor) -> Result<Tensor> {
    if d_out.shape() != indices.output_shape {
        return Err(shape_err!(
            "pool gradient {:?} does not match forward output {:?}",
            d_out.shape(),
            indices.output_shape
        ));
    }
    let [c, h, w] = indices.input_shape;
    let out_plane = indices.output_shape[1] * indices.output_shape[2];
    let mut d_x = vec![0.0f32; c * h * w];
    for ch in 0..c {
        for p in 0..out_plane {
            let idx = ch * out_plane + p;
            d_x[ch * h * w + indices.argmax[idx] as usize] += d_out.data()[idx];
        }
    }
    Tensor::from_vec(&[c, h, w], d_x)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU; `x` may be the pre-activation or the activation itself.
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Result<Tensor> {
    if !x.same_shape(d_out) {
        return Err(shape_err!("relu gradient {:?} vs input {:?}", d_out.shape(), x.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Keep/drop decisions of one dropout application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    keep: Vec<bool>,
}

impl DropoutMask {
    pub fn all_keep(len: usize) -> Self {
        Self { keep: vec![true; len] }
    }

    pub fn from_keep(keep: Vec<bool>) -> Self {
        Self { keep }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }
}

fn check_rate(rate: f32) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid!("dropout rate {rate} outside [0, 1)"));
    }
    Ok(())
}

/// Inverted dropout: kept units are scaled by `1/(1−rate)` during training,
/// so evaluation is the identity.
pub fn dropout_forward(x: &Tensor, rate: f32, mode: Mode, rng: &mut Prng) -> Result<(Tensor, DropoutMask)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::all_keep(x.len())));
    }
    let keep: Vec<bool> = (0..x.len()).map(|_| !rng.bernoulli(rate as f64)).collect();
    let y = apply_mask(x, &keep, rate);
    Ok((y, DropoutMask { keep }))
}

fn apply_mask(x: &Tensor, keep: &[bool], rate: f32) -> Tensor {
    let scale = 1.0 / (1.0 - rate);
    let data = x
        .data()
        .iter()
        .zip(keep)
        .map(|(&v, &k)| if k { v * scale } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("shape preserved")
}

pub fn dropout_backward(mask: &DropoutMask, rate: f32, d_out: &Tensor) -> Result<Tensor> {
    check_rate(rate)?;
    if mask.keep.len() != d_out.len() {
        return Err(shape_err!("dropout mask covers {} values, gradient has {}", mask.keep.len(), d_out.len()));
    }
    Ok(apply_mask(d_out, &mask.keep, rate))
}

/// Bilinear upsampling kernel, `channels×channels×2f×2f`, nonzero only on
/// the channel diagonal.
pub fn bilinear_kernel(factor: usize, channels: usize) -> Result<Tensor> {
    if factor < 1 {
        return Err(invalid!("upsampling factor must be >= 1"));
    }
    if channels < 1 {
        return Err(invalid!("channel count must be >= 1"));
    }
    let size = 2 * factor;
    let f = factor as f64;
    let center = (2.0 * f - 1.0 - (factor % 2) as f64) / (2.0 * f);
    let tap = |i: usize| 1.0 - (i as f64 / f - center).abs();
    let mut data = vec![0.0f32; channels * channels * size * size];
    for ch in 0..channels {
        let base = (ch * channels + ch) * size * size;
        for i in 0..size {
            for j in 0..size {
                data[base + i * size + j] = (tap(i) * tap(j)) as f32;
            }
        }
    }
    Tensor::from_vec(&[channels, channels, size, size], data)
}

/// Per-pixel softmax over the channel axis.
pub fn softmax_pixelwise(scores: &Tensor) -> Result<ScoreMap> {
    let (nc, h, w) = scores.dims3()?;
    let plane = h * w;
    let s = scores.data();
    let mut out = vec![0.0f32; s.len()];
    let mut buf = vec![0.0f64; nc];
    for p in 0..plane {
        let max = (0..nc).map(|k| s[k * plane + p]).fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut total = 0.0;
        for k in 0..nc {
            buf[k] = (s[k * plane + p] as f64 - max).exp();
            total += buf[k];
        }
        for k in 0..nc {
            out[k * plane + p] = (buf[k] / total) as f32;
        }
    }
    ScoreMap::new(Tensor::from_vec(&[nc, h, w], out)?, ScoreKind::Probabilities)
}

fn check_labels(nc: usize, h: usize, w: usize, d: &LabelImage) -> Result<()> {
    if d.height() != h || d.width() != w {
        return Err(shape_err!("labels {}×{} vs scores {h}×{w}", d.height(), d.width()));
    }
    d.validate(nc)
}

/// Smallest probability fed to the logarithm in [`cross_entropy_loss`].
pub const PROB_FLOOR: f64 = 1e-30;

/// Mean per-pixel cross entropy of probabilities `q` against labels `d`,
/// and the gradient with respect to the pre-softmax logits, `(q − onehot)/pixels`.
pub fn cross_entropy_loss(q: &ScoreMap, d: &LabelImage) -> Result<(f64, Tensor)> {
    let (nc, h, w) = q.values().dims3()?;
    check_labels(nc, h, w, d)?;
    let plane = h * w;
    let inv = 1.0 / plane as f32;
    let mut grad = q.values().clone();
    let g = grad.data_mut();
    let mut loss = 0.0;
    for (p, &c) in d.classes().iter().enumerate() {
        let idx = (c as usize - 1) * plane + p;
        loss -= (q.values().data()[idx] as f64).max(PROB_FLOOR).ln();
        g[idx] -= 1.0;
    }
    g.iter_mut().for_each(|v| *v *= inv);
    Ok((loss / plane as f64, grad))
}

/// Softmax followed by cross entropy, computed from logits via log-sum-exp.
/// Returns the loss, the probabilities and the logit gradient.
pub fn softmax_cross_entropy(logits: &Tensor, d: &LabelImage) -> Result<(f64, ScoreMap, Tensor)> {
    let (nc, h, w) = logits.dims3()?;
    check_labels(nc, h, w, d)?;
    let plane = h * w;
    let s = logits.data();
    let mut loss = 0.0;
    for (p, &c) in d.classes().iter().enumerate() {
        let max = (0..nc).map(|k| s[k * plane + p]).fold(f32::NEG_INFINITY, f32::max) as f64;
        let lse = max + (0..nc).map(|k| (s[k * plane + p] as f64 - max).exp()).sum::<f64>().ln();
        loss += lse - s[(c as usize - 1) * plane + p] as f64;
    }
    let q = softmax_pixelwise(logits)?;
    let (_, grad) = cross_entropy_loss(&q, d)?;
    Ok((loss / plane as f64, q, grad))
}

/// Heavy-ball momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: Vec<Tensor>,
}

impl MomentumState {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Self {
            velocity: params.into_iter().map(Tensor::zeros_like).collect(),
        }
    }
}

/// `v ← μ·v + g; θ ← θ − lr·v`.
pub fn sgd_momentum_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut MomentumState,
    lr: f32,
    momentum: f32,
) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(invalid!("learning rate {lr} must be finite and >= 0"));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(invalid!("momentum {momentum} outside [0, 1)"));
    }
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(shape_err!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        ));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if !p.same_shape(g) || !p.same_shape(v) {
            return Err(shape_err!(
                "parameter {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            ));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    Ok(())
}
