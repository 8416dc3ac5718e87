//! Gradient checks returning the worst relative error, shared by the core
//! test suite and the acceptance harness.

use super::{central_diff, conv, dropout, maxpool, rel_err, relu, softmax_ce, tconv, Arr, Kernel, RefNet};
use versnet::nn::{self, ConvParams, Mode, Padding};
use versnet::{LabelImage, NetworkParams, Prng, SarImage, Tensor, VersNetConfig};

pub const EPS: f64 = 1e-6;
pub const TOL: f64 = 1e-3;
/// Magnitude below which errors are measured in absolute terms.
pub const FLOOR: f64 = 1e-2;
pub const SPOT_TOL: f64 = 1e-2;
pub const SPOT_CHECKS: usize = 20;

fn randn(shape: &[usize], rng: &mut Prng) -> Tensor {
    Tensor::randn(shape, 0.0, 1.0, rng).unwrap()
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Largest relative error between `analytic` and the numeric derivative of
/// `f` with respect to each entry of `point`.
fn worst(analytic: &Tensor, point: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(analytic.len(), point.len());
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.data().iter().enumerate() {
        let n = central_diff(&mut x, i, EPS, &f);
        worst = worst.max(rel_err(a as f64, n, FLOOR));
    }
    worst
}

fn kernel_with(shape: [usize; 4], data: &[f64]) -> Kernel {
    Kernel {
        shape,
        data: data.to_vec(),
    }
}

fn arr_with(c: usize, h: usize, w: usize, data: &[f64]) -> Arr {
    Arr {
        c,
        h,
        w,
        data: data.to_vec(),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn check_conv(c: usize, h: usize, w: usize, o: usize, k: usize, stride: usize, pad: Padding, seed: u64) -> f64 {
    let mut rng = Prng::new(seed);
    let x = randn(&[c, h, w], &mut rng);
    let wt = randn(&[o, c, k, k], &mut rng);
    let b = randn(&[o], &mut rng);
    let p = ConvParams::new(wt.clone(), Some(b.clone()), stride, pad).unwrap();
    let y = nn::conv2d_forward(&x, &p).unwrap();
    let r = randn(y.shape(), &mut rng);
    let rr = f64s(&r);
    let g = nn::conv2d_backward(&x, &p, &r).unwrap();
    let (xs, ws, bs) = (f64s(&x), f64s(&wt), f64s(&b));
    let ks = [o, c, k, k];

    let reference = conv(&arr_with(c, h, w, &xs), &kernel_with(ks, &ws), Some(&bs), stride, pad);
    let lib = Arr::from_tensor(&y);
    assert_eq!((reference.c, reference.h, reference.w), (lib.c, lib.h, lib.w));
    for (a, b) in reference.data.iter().zip(&lib.data) {
        assert!((a - b).abs() < 1e-4, "forward mismatch {a} vs {b}");
    }

    let e_x = worst(&g.d_input, &xs, |v| conv(&arr_with(c, h, w, v), &kernel_with(ks, &ws), Some(&bs), stride, pad).dot(&rr));
    let e_w = worst(&g.d_weights, &ws, |v| conv(&arr_with(c, h, w, &xs), &kernel_with(ks, v), Some(&bs), stride, pad).dot(&rr));
    let e_b = worst(g.d_bias.as_ref().unwrap(), &bs, |v| {
        conv(&arr_with(c, h, w, &xs), &kernel_with(ks, &ws), Some(v), stride, pad).dot(&rr)
    });
    e_x.max(e_w).max(e_b)
}

#[allow(clippy::too_many_arguments)]
pub fn check_tconv(c: usize, h: usize, w: usize, o: usize, k: usize, stride: usize, pad: Padding, seed: u64) -> f64 {
    let mut rng = Prng::new(seed);
    let x = randn(&[c, h, w], &mut rng);
    let wt = randn(&[c, o, k, k], &mut rng);
    let p = ConvParams::new(wt.clone(), None, stride, pad).unwrap();
    let y = nn::tconv2d_forward(&x, &p).unwrap();
    let r = randn(y.shape(), &mut rng);
    let rr = f64s(&r);
    let g = nn::tconv2d_backward(&x, &p, &r).unwrap();
    assert!(g.d_bias.is_none());
    let (xs, ws) = (f64s(&x), f64s(&wt));
    let ks = [c, o, k, k];
    let reference = tconv(&arr_with(c, h, w, &xs), &kernel_with(ks, &ws), stride, pad);
    for (a, b) in reference.data.iter().zip(y.data()) {
        assert!((a - *b as f64).abs() < 1e-4, "forward mismatch {a} vs {b}");
    }
    let e_x = worst(&g.d_input, &xs, |v| tconv(&arr_with(c, h, w, v), &kernel_with(ks, &ws), stride, pad).dot(&rr));
    let e_w = worst(&g.d_weights, &ws, |v| tconv(&arr_with(c, h, w, &xs), &kernel_with(ks, v), stride, pad).dot(&rr));
    e_x.max(e_w)
}

pub fn check_maxpool(h: usize, w: usize, seed: u64) -> f64 {
    let mut rng = Prng::new(seed);
    let x = randn(&[3, h, w], &mut rng);
    let (y, idx) = nn::maxpool2x2_forward(&x).unwrap();
    let r = randn(y.shape(), &mut rng);
    let d = nn::maxpool2x2_backward(&idx, &r).unwrap();
    let (xs, rr) = (f64s(&x), f64s(&r));
    worst(&d, &xs, |v| maxpool(&arr_with(3, h, w, v)).dot(&rr))
}

/// Inputs are pushed at least 0.05 away from the kink at zero.
pub fn check_relu(seed: u64) -> f64 {
    let mut rng = Prng::new(seed);
    let x = randn(&[3, 6, 6], &mut rng).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v });
    let r = randn(x.shape(), &mut rng);
    let d = nn::relu_backward(&x, &r).unwrap();
    worst(&d, &f64s(&x), |v| relu(&arr_with(3, 6, 6, v)).dot(&f64s(&r)))
}

pub fn check_dropout(seed: u64) -> f64 {
    let mut rng = Prng::new(seed);
    let x = randn(&[3, 6, 6], &mut rng);
    let rate = 0.5;
    let (y, mask) = nn::dropout_forward(&x, rate, Mode::Train, &mut rng).unwrap();
    let keep = mask.keep().to_vec();
    assert!(keep.iter().any(|&k| k) && keep.iter().any(|&k| !k));
    let fwd = dropout(&Arr::from_tensor(&x), &keep, rate as f64);
    for (a, b) in fwd.data.iter().zip(y.data()) {
        assert!((a - *b as f64).abs() < 1e-6);
    }
    let r = randn(x.shape(), &mut rng);
    let d = nn::dropout_backward(&mask, rate, &r).unwrap();
    worst(&d, &f64s(&x), |v| dropout(&arr_with(3, 6, 6, v), &keep, rate as f64).dot(&f64s(&r)))
}

pub fn check_softmax_ce(seed: u64) -> f64 {
    let mut rng = Prng::new(seed);
    let (nc, h, w) = (12, 3, 4);
    let z = randn(&[nc, h, w], &mut rng).map(|v| 3.0 * v);
    let labels: Vec<u8> = (0..h * w).map(|_| 1 + (rng.next_u64() % nc as u64) as u8).collect();
    let lbl = LabelImage::new(h, w, labels.clone()).unwrap();
    let (loss, _, d) = nn::softmax_cross_entropy(&z, &lbl).unwrap();
    let zs = f64s(&z);
    assert!((loss - softmax_ce(&arr_with(nc, h, w, &zs), &labels)).abs() < 1e-5);
    worst(&d, &zs, |v| softmax_ce(&arr_with(nc, h, w, v), &labels))
}

/// Small network with every layer carrying signal: random score weights and
/// biases, no dropout.
fn spot_check_net(seed: u64) -> NetworkParams {
    let cfg = VersNetConfig {
        block_channels: [2, 3, 3, 4],
        fc_channels: 4,
        dropout_rate: 0.0,
        ..Default::default()
    };
    let mut rng = Prng::new(seed);
    let mut net = NetworkParams::build(&cfg, &mut rng).unwrap();
    for t in net.tensors_mut() {
        let fresh = Tensor::randn(t.shape(), 0.0, 0.5, &mut rng).unwrap();
        if t.shape().len() == 1 || t.data().iter().all(|&v| v == 0.0) {
            *t = fresh;
        }
    }
    net
}

/// Two random entries of each of the ten weight tensors, checked against
/// central differences of the f64 reference loss. Returns every relative
/// error.
pub fn end_to_end_spot_checks(seed: u64) -> Vec<f64> {
    let net = spot_check_net(seed);
    let mut rng = Prng::new(seed.wrapping_add(1));
    let (h, w) = (20, 28);
    let image = SarImage::from_vec(h, w, (0..h * w).map(|_| rng.uniform() as f32).collect()).unwrap();
    let labels: Vec<u8> = (0..h * w).map(|_| 1 + (rng.next_u64() % 12) as u8).collect();
    let label = LabelImage::new(h, w, labels.clone()).unwrap();
    let (loss, grads) = net.forward_backward_mode(&image, &label, Mode::Eval, &mut rng).unwrap();

    let mut reference = RefNet::from_params(&net);
    let img = Arr::from_tensor(image.pixels());
    assert!((reference.loss(&img, &labels) - loss).abs() < 1e-4);

    let g = grads.tensors();
    let mut t = 0;
    let weight_tensors: Vec<usize> = net
        .layers()
        .iter()
        .map(|l| {
            let here = t;
            t += 1 + l.conv.bias.is_some() as usize;
            here
        })
        .collect();
    let mut errors = Vec::new();
    for &t in weight_tensors.iter().take(SPOT_CHECKS / 2) {
        for _ in 0..2 {
            let i = (rng.next_u64() % g[t].len() as u64) as usize;
            let orig = *reference.param_mut(t, i);
            let eps = 1e-5;
            *reference.param_mut(t, i) = orig + eps;
            let up = reference.loss(&img, &labels);
            *reference.param_mut(t, i) = orig - eps;
            let down = reference.loss(&img, &labels);
            *reference.param_mut(t, i) = orig;
            let numeric = (up - down) / (2.0 * eps);
            errors.push(rel_err(g[t].data()[i] as f64, numeric, 1e-4));
        }
    }
    errors
}
