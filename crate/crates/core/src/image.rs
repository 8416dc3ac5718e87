//! Image-level carriers: SAR input images, class label maps and score maps.

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Number of classes in the standard label alphabet: background, ten
/// targets and the target-front class.
pub const NUM_CLASSES: usize = 12;
pub const BACKGROUND: u8 = 1;
pub const FRONT: u8 = 12;

/// Target class ids for an alphabet of `num_classes` (everything between
/// background and the trailing front class).
pub fn target_classes(num_classes: usize) -> std::ops::RangeInclusive<u8> {
    2..=(num_classes as u8 - 1)
}

/// Single-channel amplitude image, values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SarImage {
    pixels: Tensor,
}

impl SarImage {
    pub fn new(pixels: Tensor) -> Result<Self> {
        let (c, _, _) = pixels.dims3()?;
        if c != 1 {
            return Err(shape_err!("SAR image must have one channel, got {c}"));
        }
        if !pixels.all_finite() {
            return Err(invalid!("SAR image contains non-finite values"));
        }
        Ok(Self { pixels })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(Tensor::from_vec(&[1, height, width], data)?)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels.data()[row * self.width() + col]
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<SarImage> {
        SarImage::new(self.pixels.crop2d(top, left, h, w)?)
    }
}

/// `H×W` map of class ids (1-based; 1 is background).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelImage {
    height: usize,
    width: usize,
    classes: Vec<u8>,
}

impl LabelImage {
    pub fn new(height: usize, width: usize, classes: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!("label image must be non-empty"));
        }
        if classes.len() != height * width {
            return Err(shape_err!(
                "label image {height}×{width} needs {} values, got {}",
                height * width,
                classes.len()
            ));
        }
        if let Some(pos) = classes.iter().position(|&c| c == 0) {
            return Err(Error::InvalidLabel(format!("class 0 at pixel {pos}")));
        }
        Ok(Self {
            height,
            width,
            classes,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Result<Self> {
        Self::new(height, width, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.classes[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: u8) {
        self.classes[row * self.width + col] = class;
    }

    /// Checks every value lies in `1..=num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.classes.iter().position(|&c| c == 0 || c as usize > num_classes) {
            Some(pos) => Err(Error::InvalidLabel(format!(
                "class {} at pixel {pos} outside 1..={num_classes}",
                self.classes[pos]
            ))),
            None => Ok(()),
        }
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<LabelImage> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::OutOfRange(format!(
                "crop {h}×{w} at ({top}, {left}) exceeds {}×{}",
                self.height, self.width
            )));
        }
        let classes = (top..top + h)
            .flat_map(|r| self.classes[r * self.width + left..r * self.width + left + w].iter().copied())
            .collect();
        LabelImage::new(h, w, classes)
    }

    /// Pixel count per class id; index 0 is unused.
    pub fn histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes + 1];
        for &c in &self.classes {
            if (c as usize) <= num_classes {
                counts[c as usize] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Logits,
    Probabilities,
}

/// Per-pixel class scores, `num_classes × H × W`. Channel `k` holds class id `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    values: Tensor,
    kind: ScoreKind,
}

impl ScoreMap {
    pub fn new(values: Tensor, kind: ScoreKind) -> Result<Self> {
        values.dims3()?;
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    /// Per-pixel argmax as class ids; ties go to the lowest class id.
    pub fn argmax(&self) -> LabelImage {
        let (nc, h, w) = (self.num_classes(), self.height(), self.width());
        let plane = h * w;
        let v = self.values.data();
        let classes = (0..plane)
            .map(|p| {
                let mut best = 0;
                for k in 1..nc {
                    if v[k * plane + p] > v[best * plane + p] {
                        best = k;
                    }
                }
                best as u8 + 1
            })
            .collect();
        LabelImage::new(h, w, classes).expect("argmax produces a valid label image")
    }

    /// One-hot probabilities for a label image.
    pub fn one_hot(label: &LabelImage, num_classes: usize) -> Result<ScoreMap> {
        label.validate(num_classes)?;
        let plane = label.height() * label.width();
        let mut data = vec![0.0; num_classes * plane];
        for (p, &c) in label.classes().iter().enumerate() {
            data[(c as usize - 1) * plane + p] = 1.0;
        }
        let t = Tensor::from_vec(&[num_classes, label.height(), label.width()], data)?;
        ScoreMap::new(t, ScoreKind::Probabilities)
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<ScoreMap> {
        ScoreMap::new(self.values.crop2d(top, left, h, w)?, self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        let t = Tensor::fill(&[12, 2, 3], 0.25).unwrap();
        let s = ScoreMap::new(t, ScoreKind::Logits).unwrap();
        assert!(s.argmax().classes().iter().all(|&c| c == BACKGROUND));
    }

    #[test]
    fn one_hot_round_trips_through_argmax() {
        let lbl = LabelImage::new(2, 2, vec![1, 5, 12, 3]).unwrap();
        let s = ScoreMap::one_hot(&lbl, 12).unwrap();
        assert_eq!(s.argmax(), lbl);
        assert!(ScoreMap::one_hot(&lbl, 4).is_err());
    }

    #[test]
    fn label_validation() {
        assert!(LabelImage::new(1, 2, vec![1, 0]).is_err());
        let l = LabelImage::new(1, 2, vec![1, 13]).unwrap();
        assert!(matches!(l.validate(12), Err(Error::InvalidLabel(_))));
        assert_eq!(target_classes(12), 2..=11);
    }
}
