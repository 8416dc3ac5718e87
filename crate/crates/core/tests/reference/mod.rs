//! Naive double-precision reference implementations used as test oracles.
//! Every function here is written from the layer definitions with plain
//! loops and shares no code with the library.

#![allow(dead_code)]

pub mod checks;

use versnet::nn::Padding;
use versnet::{NetworkParams, Tensor};

/// `c×h×w` array of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Arr {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let (c, h, w) = t.dims3().unwrap();
        Self {
            c,
            h,
            w,
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.h + i) * self.w + j]
    }

    pub fn at_mut(&mut self, c: usize, i: usize, j: usize) -> &mut f64 {
        &mut self.data[(c * self.h + i) * self.w + j]
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.data.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// `o×c×k×k` (conv) or `c×o×k×k` (tconv) weights as f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn from_tensor(t: &Tensor) -> Self {
        let (a, b, c, d) = t.dims4().unwrap();
        Self {
            shape: [a, b, c, d],
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        let [_, sb, si, sj] = self.shape;
        self.data[((a * sb + b) * si + i) * sj + j]
    }
}

pub fn conv(x: &Arr, k: &Kernel, bias: Option<&[f64]>, stride: usize, pad: Padding) -> Arr {
    let [o, c, kh, kw] = k.shape;
    assert_eq!(c, x.c);
    let oh = (x.h + pad.top + pad.bottom - kh) / stride + 1;
    let ow = (x.w + pad.left + pad.right - kw) / stride + 1;
    let mut y = Arr::zeros(o, oh, ow);
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = bias.map_or(0.0, |b| b[oc]);
                for ic in 0..c {
                    for p in 0..kh {
                        for q in 0..kw {
                            let r = (i * stride + p) as isize - pad.top as isize;
                            let t = (j * stride + q) as isize - pad.left as isize;
                            if r >= 0 && t >= 0 && (r as usize) < x.h && (t as usize) < x.w {
                                s += k.at(oc, ic, p, q) * x.at(ic, r as usize, t as usize);
                            }
                        }
                    }
                }
                *y.at_mut(oc, i, j) = s;
            }
        }
    }
    y
}

/// Transposed convolution: every input pixel scatters a weighted kernel
/// into the (cropped) output.
pub fn tconv(x: &Arr, k: &Kernel, stride: usize, pad: Padding) -> Arr {
    let [c, o, kh, kw] = k.shape;
    assert_eq!(c, x.c);
    let oh = (x.h - 1) * stride + kh - pad.top - pad.bottom;
    let ow = (x.w - 1) * stride + kw - pad.left - pad.right;
    let mut y = Arr::zeros(o, oh, ow);
    for ic in 0..c {
        for i in 0..x.h {
            for j in 0..x.w {
                for oc in 0..o {
                    for p in 0..kh {
                        for q in 0..kw {
                            let r = (i * stride + p) as isize - pad.top as isize;
                            let t = (j * stride + q) as isize - pad.left as isize;
                            if r >= 0 && t >= 0 && (r as usize) < oh && (t as usize) < ow {
                                *y.at_mut(oc, r as usize, t as usize) += x.at(ic, i, j) * k.at(ic, oc, p, q);
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// 2×2 stride-2 max pooling; a partial window at an odd border pools the
/// pixels it has.
pub fn maxpool(x: &Arr) -> Arr {
    let (oh, ow) = (x.h.div_ceil(2), x.w.div_ceil(2));
    let mut y = Arr::zeros(x.c, oh, ow);
    for c in 0..x.c {
        for i in 0..oh {
            for j in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for r in 2 * i..(2 * i + 2).min(x.h) {
                    for t in 2 * j..(2 * j + 2).min(x.w) {
                        m = m.max(x.at(c, r, t));
                    }
                }
                *y.at_mut(c, i, j) = m;
            }
        }
    }
    y
}

pub fn relu(x: &Arr) -> Arr {
    Arr {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..x.clone()
    }
}

pub fn dropout(x: &Arr, keep: &[bool], rate: f64) -> Arr {
    Arr {
        data: x
            .data
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v / (1.0 - rate) } else { 0.0 })
            .collect(),
        ..x.clone()
    }
}

/// Mean over pixels of `−ln softmax(z)[label]`; labels are 1-based.
pub fn softmax_ce(z: &Arr, labels: &[u8]) -> f64 {
    let plane = z.h * z.w;
    let mut total = 0.0;
    for p in 0..plane {
        let vals: Vec<f64> = (0..z.c).map(|k| z.data[k * plane + p]).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - vals[labels[p] as usize - 1];
    }
    total / plane as f64
}

/// f64 copy of all network parameters, layer by layer.
#[derive(Debug, Clone)]
pub struct RefNet {
    pub layers: Vec<(Kernel, Option<Vec<f64>>, usize, Padding)>,
}

impl RefNet {
    pub fn from_params(net: &NetworkParams) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| {
                    (
                        Kernel::from_tensor(&l.conv.weights),
                        l.conv.bias.as_ref().map(|b| b.data().iter().map(|&v| v as f64).collect()),
                        l.conv.stride,
                        l.conv.pad,
                    )
                })
                .collect(),
        }
    }

    /// Mutable access to parameter `index` of tensor `tensor`, counting
    /// tensors as weights then bias per layer.
    pub fn param_mut(&mut self, tensor: usize, index: usize) -> &mut f64 {
        let mut t = 0;
        for (k, b, _, _) in &mut self.layers {
            if t == tensor {
                return &mut k.data[index];
            }
            t += 1;
            if let Some(b) = b {
                if t == tensor {
                    return &mut b[index];
                }
                t += 1;
            }
        }
        panic!("no tensor {tensor}");
    }

    fn apply(&self, i: usize, x: &Arr) -> Arr {
        let (k, b, s, p) = &self.layers[i];
        conv(x, k, b.as_deref(), *s, *p)
    }

    /// Evaluation-mode logits for an `h×w` image.
    pub fn logits(&self, image: &Arr) -> Arr {
        let (h, w) = (image.h, image.w);
        let (ph, pw) = (h.div_ceil(16) * 16, w.div_ceil(16) * 16);
        let mut x = Arr::zeros(1, ph, pw);
        for i in 0..h {
            for j in 0..w {
                *x.at_mut(0, i, j) = image.at(0, i, j);
            }
        }
        for b in 0..4 {
            x = relu(&self.apply(2 * b, &x));
            x = relu(&self.apply(2 * b + 1, &x));
            x = maxpool(&x);
        }
        x = relu(&self.apply(8, &x));
        x = self.apply(9, &x);
        let (k, _, s, p) = &self.layers[10];
        let up = tconv(&x, k, *s, *p);
        let mut out = Arr::zeros(up.c, h, w);
        for c in 0..up.c {
            for i in 0..h {
                for j in 0..w {
                    *out.at_mut(c, i, j) = up.at(c, i, j);
                }
            }
        }
        out
    }

    pub fn loss(&self, image: &Arr, labels: &[u8]) -> f64 {
        softmax_ce(&self.logits(image), labels)
    }
}

/// Central finite difference of `f` at `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + eps;
    let up = f(x);
    x[i] = orig - eps;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * eps)
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
