//! Dense row-major `f32` tensors.
//!
//! Image-like tensors always use the `(C, H, W)` layout. The binary encoding
//! is little-endian: the magic `VNT1`, a `u32` rank, `rank` `u32` dimensions,
//! then the raw `f32` payload.

use std::io::{Read, Write};

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::Prng;

pub const TENSOR_MAGIC: &[u8; 4] = b"VNT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(invalid!("tensor shape must have at least one dimension"));
    }
    if let Some(d) = shape.iter().position(|&d| d == 0) {
        return Err(invalid!("dimension {d} of shape {shape:?} is zero"));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| invalid!("shape {shape:?} overflows"))
}

impl Tensor {
    /// Tensor of the given shape with every element set to `value`.
    pub fn fill(shape: &[usize], value: f32) -> Result<Self> {
        let len = check_shape(shape)?;
        if !value.is_finite() {
            return Err(invalid!("fill value must be finite"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::fill(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(shape_err!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// I.i.d. Gaussian samples with the given mean and standard deviation.
    pub fn randn(shape: &[usize], mean: f32, stddev: f32, rng: &mut Prng) -> Result<Self> {
        let len = check_shape(shape)?;
        if !stddev.is_finite() || stddev < 0.0 || !mean.is_finite() {
            return Err(invalid!("randn needs finite mean and stddev >= 0, got stddev {stddev}"));
        }
        let data = (0..len)
            .map(|_| {
                let z = rng.standard_normal();
                (mean as f64 + stddev as f64 * z) as f32
            })
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(shape_err!("expected a C×H×W tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(shape_err!("expected a rank-4 tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn get3(&self, c: usize, i: usize, j: usize) -> f32 {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + i) * w + j]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(shape_err!("dot of {:?} and {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f32, other: &Tensor) -> Result<()> {
        if !self.same_shape(other) {
            return Err(shape_err!("add of {:?} and {:?}", self.shape, other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f32) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if !self.same_shape(other) {
            return Err(shape_err!("compare {:?} with {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Pads the two spatial axes of a `C×H×W` tensor with a constant.
    pub fn pad2d(
        &self,
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
        value: f32,
    ) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        let (oh, ow) = (h + top + bottom, w + left + right);
        let mut out = vec![value; c * oh * ow];
        for ch in 0..c {
            for i in 0..h {
                let src = (ch * h + i) * w;
                let dst = (ch * oh + i + top) * ow + left;
                out[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        Tensor::from_vec(&[c, oh, ow], out)
    }

    /// Extracts the `out_h × out_w` window whose top-left corner is `(top, left)`.
    pub fn crop2d(&self, top: usize, left: usize, out_h: usize, out_w: usize) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        if out_h == 0 || out_w == 0 {
            return Err(invalid!("crop window must be non-empty"));
        }
        if top + out_h > h || left + out_w > w {
            return Err(Error::OutOfRange(format!(
                "crop {out_h}×{out_w} at ({top}, {left}) exceeds {h}×{w}"
            )));
        }
        let mut out = Vec::with_capacity(c * out_h * out_w);
        for ch in 0..c {
            for i in 0..out_h {
                let src = (ch * h + top + i) * w + left;
                out.extend_from_slice(&self.data[src..src + out_w]);
            }
        }
        Tensor::from_vec(&[c, out_h, out_w], out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Format(format!("bad tensor magic {magic:?}")));
        }
        let rank = read_u32(r)? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("unsupported tensor rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| read_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let mut raw = vec![0u8; len * 4];
        read_exact(r, &mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Tensor::from_vec(&shape, data)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated binary data: {e}")))
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
