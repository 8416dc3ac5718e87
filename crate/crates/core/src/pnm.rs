//! Netpbm grayscale (PGM) and color (PPM) files.
//!
//! Amplitude images map `[0, 1]` linearly onto the full integer range of
//! an 8- or 16-bit PGM. Label images are 8-bit PGMs whose pixel value is
//! the class id.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::image::{LabelImage, SarImage, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Decoded Netpbm raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Parses a P2, P3, P5 or P6 file.
pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(cur.err("missing Netpbm magic"));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        other => {
            cur.pos = 1;
            return Err(cur.err(format!("unsupported Netpbm kind P{}", other as char)));
        }
    };
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height * channels;
    let mut samples = Vec::with_capacity(count);
    if binary {
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected single whitespace before raster"));
        }
        cur.pos += 1;
        let wide = maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        if bytes.len() - cur.pos < needed {
            cur.pos = bytes.len();
            return Err(cur.err(format!("raster truncated: need {needed} bytes")));
        }
        let raster = &bytes[cur.pos..cur.pos + needed];
        if wide {
            samples.extend(raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])));
        } else {
            samples.extend(raster.iter().map(|&b| b as u16));
        }
    } else {
        for _ in 0..count {
            samples.push(cur.number("sample")? as u16);
        }
    }
    if let Some(i) = samples.iter().position(|&s| s as u32 > maxval) {
        return Err(Error::Parse {
            offset: cur.pos,
            message: format!("sample {i} exceeds maxval {maxval}"),
        });
    }
    Ok(Raster {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

/// Encodes a binary P5 (one channel) or P6 (three channels) file.
pub fn encode(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", raster.width, raster.height, raster.maxval).into_bytes();
    if raster.maxval > 255 {
        for s in &raster.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(raster.samples.iter().map(|&s| s as u8));
    }
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        Error::InvalidLabel(m) => Error::InvalidLabel(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn image_from_raster(r: &Raster) -> Result<SarImage> {
    if r.channels != 1 {
        return Err(invalid!("expected a grayscale raster"));
    }
    let scale = 1.0 / r.maxval as f32;
    SarImage::from_vec(r.height, r.width, r.samples.iter().map(|&s| s as f32 * scale).collect())
}

pub fn image_to_raster(img: &SarImage, depth: BitDepth) -> Raster {
    let maxval = depth.maxval();
    let samples = img
        .pixels()
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) as f64 * maxval as f64).round() as u16)
        .collect();
    Raster {
        width: img.width(),
        height: img.height(),
        channels: 1,
        maxval,
        samples,
    }
}

pub fn load_image(path: &Path) -> Result<SarImage> {
    let r = decode(&read_file(path)?).map_err(|e| with_path(path, e))?;
    image_from_raster(&r).map_err(|e| with_path(path, e))
}

pub fn save_image(img: &SarImage, path: &Path, depth: BitDepth) -> Result<()> {
    write_file(path, &encode(&image_to_raster(img, depth)))
}

pub fn label_from_raster(r: &Raster) -> Result<LabelImage> {
    if r.channels != 1 {
        return Err(invalid!("expected a grayscale raster"));
    }
    if let Some(i) = r.samples.iter().position(|&s| s == 0 || s as usize > NUM_CLASSES) {
        return Err(Error::InvalidLabel(format!(
            "pixel {i} has value {} outside 1..={NUM_CLASSES}",
            r.samples[i]
        )));
    }
    LabelImage::new(r.height, r.width, r.samples.iter().map(|&s| s as u8).collect())
}

pub fn label_to_raster(lbl: &LabelImage) -> Raster {
    Raster {
        width: lbl.width(),
        height: lbl.height(),
        channels: 1,
        maxval: 255,
        samples: lbl.classes().iter().map(|&c| c as u16).collect(),
    }
}

pub fn load_label(path: &Path) -> Result<LabelImage> {
    let r = decode(&read_file(path)?).map_err(|e| with_path(path, e))?;
    label_from_raster(&r).map_err(|e| with_path(path, e))
}

pub fn save_label(lbl: &LabelImage, path: &Path) -> Result<()> {
    write_file(path, &encode(&label_to_raster(lbl)))
}

/// Writes an 8-bit RGB PPM; `rgb` is interleaved, row-major.
pub fn save_ppm(width: usize, height: usize, rgb: &[u8], path: &Path) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(invalid!("rgb buffer length {} does not match {width}×{height}", rgb.len()));
    }
    let raster = Raster {
        width,
        height,
        channels: 3,
        maxval: 255,
        samples: rgb.iter().map(|&b| b as u16).collect(),
    };
    write_file(path, &encode(&raster))
}

pub fn load_ppm(path: &Path) -> Result<Raster> {
    let r = decode(&read_file(path)?).map_err(|e| with_path(path, e))?;
    if r.channels != 3 {
        return Err(invalid!("{} is not a color PPM", path.display()));
    }
    Ok(r)
}
