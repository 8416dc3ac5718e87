//! The encoder/decoder network.
//!
//! Encoder: four blocks of `[conv3×3 + ReLU, conv3×3 + ReLU, maxpool 2×2]`,
//! a 6×6 convolution with ReLU and dropout, and a 1×1 scoring convolution
//! without activation. Decoder: one 16× transposed convolution. Inputs are
//! zero-padded on the bottom/right to a multiple of 16 and the decoded score
//! map is cropped back, so any `H×W` input yields an `N_c×H×W` output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::image::{LabelImage, SarImage, ScoreKind, ScoreMap, NUM_CLASSES};
use crate::nn::{self, ConvParams, DropoutMask, GradPair, Mode, MomentumState, Padding, PoolIndices};
use crate::rng::Prng;
use crate::tensor::{read_u32, Tensor};

/// Total downsampling of the encoder and upsampling of the decoder.
pub const OUTPUT_STRIDE: usize = 16;
const FC_KERNEL: usize = 6;
/// Keeps the 6×6 convolution size-preserving.
const FC_PAD: Padding = Padding::new(2, 3, 2, 3);
const UPSAMPLE_KERNEL: usize = 2 * OUTPUT_STRIDE;
const UPSAMPLE_PAD: Padding = Padding::uniform(OUTPUT_STRIDE / 2);

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VersNetConfig {
    pub num_classes: usize,
    pub block_channels: [usize; 4],
    /// Width of the 6×6 convolution.
    pub fc_channels: usize,
    pub dropout_rate: f32,
    pub input_channels: usize,
}

impl Default for VersNetConfig {
    fn default() -> Self {
        Self {
            num_classes: NUM_CLASSES,
            block_channels: [32, 64, 128, 256],
            fc_channels: 512,
            dropout_rate: 0.5,
            input_channels: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Conv,
    Transposed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerSpec {
    name: String,
    kind: LayerKind,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: Padding,
    bias: bool,
}

impl LayerSpec {
    fn weight_shape(&self) -> [usize; 4] {
        let k = self.kernel;
        match self.kind {
            LayerKind::Conv => [self.out_channels, self.in_channels, k, k],
            LayerKind::Transposed => [self.in_channels, self.out_channels, k, k],
        }
    }
}

impl VersNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 3 {
            // background, at least one target, front
            return Err(invalid!("num_classes must be at least 3, got {}", self.num_classes));
        }
        if self.num_classes > u8::MAX as usize {
            return Err(invalid!("num_classes {} does not fit a label byte", self.num_classes));
        }
        if self.block_channels.contains(&0) || self.fc_channels == 0 || self.input_channels == 0 {
            return Err(invalid!("channel counts must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        let conv = |name: String, i, o, k, pad| LayerSpec {
            name,
            kind: LayerKind::Conv,
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: 1,
            pad,
            bias: true,
        };
        let mut specs = Vec::with_capacity(11);
        let mut prev = self.input_channels;
        for (b, &c) in self.block_channels.iter().enumerate() {
            specs.push(conv(format!("block{}a", b + 1), prev, c, 3, Padding::uniform(1)));
            specs.push(conv(format!("block{}b", b + 1), c, c, 3, Padding::uniform(1)));
            prev = c;
        }
        specs.push(conv("fc6".into(), prev, self.fc_channels, FC_KERNEL, FC_PAD));
        specs.push(conv("score".into(), self.fc_channels, self.num_classes, 1, Padding::default()));
        specs.push(LayerSpec {
            name: "upsample".into(),
            kind: LayerKind::Transposed,
            in_channels: self.num_classes,
            out_channels: self.num_classes,
            kernel: UPSAMPLE_KERNEL,
            stride: OUTPUT_STRIDE,
            pad: UPSAMPLE_PAD,
            bias: false,
        });
        specs
    }

    /// Number of learnable scalars, in closed form.
    pub fn parameter_count(&self) -> usize {
        let [c1, c2, c3, c4] = self.block_channels;
        let mut total = 0;
        let mut prev = self.input_channels;
        for c in [c1, c2, c3, c4] {
            total += prev * c * 9 + c + c * c * 9 + c;
            prev = c;
        }
        let (fc, nc) = (self.fc_channels, self.num_classes);
        total += c4 * fc * FC_KERNEL * FC_KERNEL + fc;
        total += fc * nc + nc;
        total += nc * nc * UPSAMPLE_KERNEL * UPSAMPLE_KERNEL;
        total
    }
}

/// A named layer of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub conv: ConvParams,
}

/// All learnable weights and biases, in fixed layer order:
/// `block1a … block4b, fc6, score, upsample`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: VersNetConfig,
    layers: Vec<Layer>,
}

/// Gradients for every layer, aligned with [`NetworkParams::layers`].
#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub layers: Vec<GradPair>,
}

impl NetworkGrads {
    /// Gradient tensors in the order of [`NetworkParams::tensors`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|g| std::iter::once(&g.d_weights).chain(g.d_bias.as_ref()))
            .collect()
    }
}

const SCORE: usize = 9;
const UPSAMPLE: usize = 10;
const FC6: usize = 8;

struct Trace {
    height: usize,
    width: usize,
    /// Input of every layer, in layer order.
    inputs: Vec<Tensor>,
    /// Post-ReLU output of each block's second convolution.
    block_out: Vec<Tensor>,
    pools: Vec<PoolIndices>,
    fc_act: Tensor,
    mask: DropoutMask,
}

impl NetworkParams {
    /// Fresh parameters: He-initialized ReLU convolutions, zero biases,
    /// an all-zero scoring layer and a bilinear decoder.
    pub fn build(config: &VersNetConfig, rng: &mut Prng) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        for spec in config.layer_specs() {
            let shape = spec.weight_shape();
            let weights = match spec.name.as_str() {
                "score" => Tensor::zeros(&shape)?,
                "upsample" => nn::bilinear_kernel(OUTPUT_STRIDE, config.num_classes)?,
                _ => {
                    let fan_in = spec.in_channels * spec.kernel * spec.kernel;
                    Tensor::randn(&shape, 0.0, (2.0 / fan_in as f32).sqrt(), rng)?
                }
            };
            let bias = spec
                .bias
                .then(|| Tensor::zeros(&[spec.out_channels]))
                .transpose()?;
            layers.push(Layer {
                name: spec.name.clone(),
                conv: ConvParams::new(weights, bias, spec.stride, spec.pad)?,
            });
        }
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub fn config(&self) -> &VersNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    /// Parameter tensors: each layer's weights followed by its bias, if any.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(&l.conv.weights).chain(l.conv.bias.as_ref()))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| std::iter::once(&mut l.conv.weights).chain(l.conv.bias.as_mut()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_image(&self, image: &SarImage) -> Result<()> {
        if self.config.input_channels != 1 {
            return Err(shape_err!(
                "network expects {} input channels, SAR images have one",
                self.config.input_channels
            ));
        }
        if image.height() == 0 || image.width() == 0 {
            return Err(invalid!("image must be non-empty"));
        }
        Ok(())
    }

    fn run(&self, image: &SarImage, mode: Mode, rng: &mut Prng) -> Result<(Tensor, Trace)> {
        self.check_image(image)?;
        let (h, w) = (image.height(), image.width());
        let ph = h.div_ceil(OUTPUT_STRIDE) * OUTPUT_STRIDE;
        let pw = w.div_ceil(OUTPUT_STRIDE) * OUTPUT_STRIDE;
        let mut x = image.pixels().pad2d(0, ph - h, 0, pw - w, 0.0)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut block_out = Vec::with_capacity(4);
        let mut pools = Vec::with_capacity(4);
        for b in 0..4 {
            let a = nn::relu_forward(&nn::conv2d_forward(&x, &self.layers[2 * b].conv)?);
            inputs.push(x);
            let c = nn::relu_forward(&nn::conv2d_forward(&a, &self.layers[2 * b + 1].conv)?);
            inputs.push(a);
            let (pooled, idx) = nn::maxpool2x2_forward(&c)?;
            block_out.push(c);
            pools.push(idx);
            x = pooled;
        }
        let fc_act = nn::relu_forward(&nn::conv2d_forward(&x, &self.layers[FC6].conv)?);
        inputs.push(x);
        let (dropped, mask) = nn::dropout_forward(&fc_act, self.config.dropout_rate, mode, rng)?;
        let scores = nn::conv2d_forward(&dropped, &self.layers[SCORE].conv)?;
        inputs.push(dropped);
        let up = nn::tconv2d_forward(&scores, &self.layers[UPSAMPLE].conv)?;
        inputs.push(scores);
        let logits = up.crop2d(0, 0, h, w)?;
        Ok((
            logits,
            Trace {
                height: ph,
                width: pw,
                inputs,
                block_out,
                pools,
                fc_act,
                mask,
            },
        ))
    }

    /// Per-pixel class logits, `num_classes × H × W`.
    pub fn forward(&self, image: &SarImage, mode: Mode, rng: &mut Prng) -> Result<ScoreMap> {
        let (logits, _) = self.run(image, mode, rng)?;
        ScoreMap::new(logits, ScoreKind::Logits)
    }

    /// Per-pixel class probabilities in evaluation mode.
    pub fn probabilities(&self, image: &SarImage) -> Result<ScoreMap> {
        let logits = self.forward(image, Mode::Eval, &mut Prng::new(0))?;
        nn::softmax_pixelwise(logits.values())
    }

    /// Per-pixel argmax class (ties toward the lowest class id), evaluation mode.
    pub fn predict(&self, image: &SarImage) -> Result<LabelImage> {
        Ok(self.forward(image, Mode::Eval, &mut Prng::new(0))?.argmax())
    }

    /// Training-mode forward pass, mean pixel cross entropy against `label`
    /// and its exact gradient with respect to every parameter.
    pub fn forward_backward(&self, image: &SarImage, label: &LabelImage, rng: &mut Prng) -> Result<(f64, NetworkGrads)> {
        self.forward_backward_mode(image, label, Mode::Train, rng)
    }

    pub fn forward_backward_mode(
        &self,
        image: &SarImage,
        label: &LabelImage,
        mode: Mode,
        rng: &mut Prng,
    ) -> Result<(f64, NetworkGrads)> {
        if label.height() != image.height() || label.width() != image.width() {
            return Err(Error::InvalidLabel(format!(
                "label {}×{} does not match image {}×{}",
                label.height(),
                label.width(),
                image.height(),
                image.width()
            )));
        }
        label.validate(self.config.num_classes)?;
        let (logits, trace) = self.run(image, mode, rng)?;
        let (loss, _, d_logits) = nn::softmax_cross_entropy(&logits, label)?;
        let grads = self.backward(trace, &d_logits)?;
        Ok((loss, grads))
    }

    fn backward(&self, mut t: Trace, d_logits: &Tensor) -> Result<NetworkGrads> {
        let (_, h, w) = d_logits.dims3()?;
        let d_up = d_logits.pad2d(0, t.height - h, 0, t.width - w, 0.0)?;
        let mut grads: Vec<Option<GradPair>> = vec![None; self.layers.len()];

        let g = nn::tconv2d_backward(&t.inputs[UPSAMPLE], &self.layers[UPSAMPLE].conv, &d_up)?;
        let d_scores = g.d_input.clone();
        grads[UPSAMPLE] = Some(g);

        let g = nn::conv2d_backward(&t.inputs[SCORE], &self.layers[SCORE].conv, &d_scores)?;
        let d_dropped = g.d_input.clone();
        grads[SCORE] = Some(g);

        let d_fc = nn::dropout_backward(&t.mask, self.config.dropout_rate, &d_dropped)?;
        let d_fc = nn::relu_backward(&t.fc_act, &d_fc)?;
        let g = nn::conv2d_backward(&t.inputs[FC6], &self.layers[FC6].conv, &d_fc)?;
        let mut d_x = g.d_input.clone();
        grads[FC6] = Some(g);

        for b in (0..4).rev() {
            let block_out = t.block_out.pop().expect("one output per block");
            let pool = t.pools.pop().expect("one pool per block");
            let d_c = nn::maxpool2x2_backward(&pool, &d_x)?;
            let d_c = nn::relu_backward(&block_out, &d_c)?;
            let (ia, ib) = (2 * b, 2 * b + 1);
            let g = nn::conv2d_backward(&t.inputs[ib], &self.layers[ib].conv, &d_c)?;
            let d_a = nn::relu_backward(&t.inputs[ib], &g.d_input)?;
            grads[ib] = Some(g);
            let g = nn::conv2d_backward(&t.inputs[ia], &self.layers[ia].conv, &d_a)?;
            d_x = g.d_input.clone();
            grads[ia] = Some(g);
        }
        Ok(NetworkGrads {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        })
    }

    /// Serializes parameters and, optionally, momentum buffers.
    pub fn write_checkpoint(&self, w: &mut impl Write, momentum: Option<&MomentumState>) -> std::io::Result<()> {
        let c = &self.config;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for v in [c.num_classes, c.input_channels]
            .into_iter()
            .chain(c.block_channels)
            .chain([c.fc_channels])
        {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&c.dropout_rate.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.name.len() as u32).to_le_bytes())?;
            w.write_all(layer.name.as_bytes())?;
            let p = &layer.conv;
            for v in [p.stride, p.pad.top, p.pad.bottom, p.pad.left, p.pad.right] {
                w.write_all(&(v as u32).to_le_bytes())?;
            }
            p.weights.write_to(w)?;
            match &p.bias {
                Some(b) => {
                    w.write_all(&[1])?;
                    b.write_to(w)?;
                }
                None => w.write_all(&[0])?,
            }
        }
        let velocity = momentum.map(|m| m.velocity.as_slice()).unwrap_or(&[]);
        w.write_all(&(velocity.len() as u32).to_le_bytes())?;
        for v in velocity {
            v.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<(NetworkParams, Option<MomentumState>)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut u = || read_u32(r).map(|v| v as usize);
        let num_classes = u()?;
        let input_channels = u()?;
        let block_channels = [u()?, u()?, u()?, u()?];
        let fc_channels = u()?;
        let mut rate = [0u8; 4];
        r.read_exact(&mut rate)
            .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        let config = VersNetConfig {
            num_classes,
            block_channels,
            fc_channels,
            dropout_rate: f32::from_le_bytes(rate),
            input_channels,
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let specs = config.layer_specs();
        let count = read_u32(r)? as usize;
        if count != specs.len() {
            return Err(Error::Format(format!("expected {} layers, found {count}", specs.len())));
        }
        let mut layers = Vec::with_capacity(count);
        for spec in &specs {
            let len = read_u32(r)? as usize;
            if len > 64 {
                return Err(Error::Format(format!("layer name length {len}")));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)
                .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("layer name is not UTF-8".into()))?;
            let mut u = || read_u32(r).map(|v| v as usize);
            let stride = u()?;
            let pad = Padding::new(u()?, u()?, u()?, u()?);
            let weights = Tensor::read_from(r)?;
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)
                .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
            let bias = match flag[0] {
                0 => None,
                1 => Some(Tensor::read_from(r)?),
                f => return Err(Error::Format(format!("bad bias flag {f}"))),
            };
            let consistent = name == spec.name
                && stride == spec.stride
                && pad == spec.pad
                && weights.shape() == spec.weight_shape()
                && bias.as_ref().map(|b| b.shape().to_vec()) == spec.bias.then(|| vec![spec.out_channels]);
            if !consistent {
                return Err(Error::Format(format!("layer {name} does not match the stored configuration")));
            }
            layers.push(Layer {
                name,
                conv: ConvParams::new(weights, bias, stride, pad)?,
            });
        }
        let params = NetworkParams { config, layers };
        let n = read_u32(r)? as usize;
        let momentum = if n == 0 {
            None
        } else {
            let shapes: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
            if n != shapes.len() {
                return Err(Error::Format(format!("expected {} momentum tensors, found {n}", shapes.len())));
            }
            let velocity = shapes
                .iter()
                .map(|shape| {
                    let t = Tensor::read_from(r)?;
                    if t.shape() != &shape[..] {
                        return Err(Error::Format("momentum tensor shape mismatch".into()));
                    }
                    Ok(t)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(MomentumState { velocity })
        };
        Ok((params, momentum))
    }

    pub fn save_checkpoint(&self, path: &Path, momentum: Option<&MomentumState>) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_checkpoint(&mut w, momentum)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<(NetworkParams, Option<MomentumState>)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> VersNetConfig {
        VersNetConfig {
            block_channels: [2, 3, 4, 4],
            fc_channels: 6,
            ..Default::default()
        }
    }

    fn image(h: usize, w: usize, seed: u64) -> SarImage {
        let mut rng = Prng::new(seed);
        SarImage::from_vec(h, w, (0..h * w).map(|_| rng.uniform() as f32).collect()).unwrap()
    }

    #[test]
    fn default_layer_inventory() {
        let p = NetworkParams::build(&VersNetConfig::default(), &mut Prng::new(1)).unwrap();
        let names: Vec<_> = p.layers().iter().map(|l| l.name.as_str()).collect();
        assert_eq!(
            names,
            ["block1a", "block1b", "block2a", "block2b", "block3a", "block3b", "block4a", "block4b", "fc6", "score", "upsample"]
        );
        let weights = p.layers().len();
        let biases = p.layers().iter().filter(|l| l.conv.bias.is_some()).count();
        // nine convolutions (8 in blocks + fc6) plus the scoring conv carry biases;
        // the transposed conv does not.
        assert_eq!((weights, biases), (11, 10));
        assert_eq!(p.parameter_count(), VersNetConfig::default().parameter_count());
    }

    #[test]
    fn init_contract() {
        let a = NetworkParams::build(&tiny(), &mut Prng::new(5)).unwrap();
        let b = NetworkParams::build(&tiny(), &mut Prng::new(5)).unwrap();
        assert_eq!(a, b);
        let score = a.layer("score").unwrap();
        assert!(score.conv.weights.data().iter().all(|&v| v == 0.0));
        assert!(score.conv.bias.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(a.layer("upsample").unwrap().conv.weights, nn::bilinear_kernel(16, 12).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = tiny();
        c.dropout_rate = 1.0;
        assert!(NetworkParams::build(&c, &mut Prng::new(0)).is_err());
        let mut c = tiny();
        c.num_classes = 2;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.block_channels[2] = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_score_layer_gives_zero_logits_and_ln12_loss() {
        let p = NetworkParams::build(&tiny(), &mut Prng::new(2)).unwrap();
        let img = image(37, 21, 3);
        let logits = p.forward(&img, Mode::Train, &mut Prng::new(9)).unwrap();
        assert_eq!(logits.values().shape(), &[12, 37, 21]);
        assert!(logits.values().data().iter().all(|&v| v == 0.0));
        let lbl = LabelImage::filled(37, 21, 4).unwrap();
        let (loss, _) = p.forward_backward(&img, &lbl, &mut Prng::new(1)).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-5);
        assert!(p.predict(&img).unwrap().classes().iter().all(|&c| c == 1));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut p = NetworkParams::build(&tiny(), &mut Prng::new(2)).unwrap();
        let w = Tensor::randn(&[12, 6, 1, 1], 0.0, 0.5, &mut Prng::new(3)).unwrap();
        p.layer_mut("score").unwrap().conv.weights = w;
        let img = image(20, 30, 4);
        let a = p.forward(&img, Mode::Eval, &mut Prng::new(1)).unwrap();
        let b = p.forward(&img, Mode::Eval, &mut Prng::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_or_mismatched_inputs() {
        let p = NetworkParams::build(&tiny(), &mut Prng::new(2)).unwrap();
        let img = image(16, 16, 1);
        let lbl = LabelImage::filled(16, 17, 1).unwrap();
        assert!(matches!(
            p.forward_backward(&img, &lbl, &mut Prng::new(0)),
            Err(Error::InvalidLabel(_))
        ));
        let lbl = LabelImage::filled(16, 16, 13).unwrap();
        assert!(matches!(
            p.forward_backward(&img, &lbl, &mut Prng::new(0)),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = NetworkParams::build(&tiny(), &mut Prng::new(8)).unwrap();
        let mut mom = MomentumState::zeros_like(p.tensors());
        mom.velocity[3] = Tensor::randn(mom.velocity[3].shape(), 0.0, 1.0, &mut Prng::new(1)).unwrap();
        let mut bytes = Vec::new();
        p.write_checkpoint(&mut bytes, Some(&mom)).unwrap();
        assert_eq!(&bytes[..4], b"VNCK");
        let (q, m) = NetworkParams::read_checkpoint(&mut &bytes[..]).unwrap();
        assert_eq!(q, p);
        assert_eq!(m.as_ref(), Some(&mom));
        let mut again = Vec::new();
        q.write_checkpoint(&mut again, m.as_ref()).unwrap();
        assert_eq!(again, bytes);

        assert!(NetworkParams::read_checkpoint(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NetworkParams::read_checkpoint(&mut &bad[..]).is_err());
    }
}
