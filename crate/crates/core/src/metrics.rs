//! Confusion matrices and segmentation / classification metrics.
//!
//! Confusion matrices are stored with rows = predicted class and columns =
//! actual class. Matrices are indexed from 0; for label alphabets the
//! class id `c` lives at index `c - 1`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::image::{target_classes, LabelImage, ScoreMap};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            counts: vec![0; size * size],
        }
    }

    /// Builds a matrix from rows (one row per predicted class).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(shape_err!("confusion matrix must be square"));
        }
        Ok(Self {
            size,
            counts: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted * self.size + actual]
    }

    pub fn add(&mut self, predicted: usize, actual: usize, n: u64) {
        self.counts[predicted * self.size + actual] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    /// Items predicted as `index`.
    pub fn row_sum(&self, index: usize) -> u64 {
        (0..self.size).map(|j| self.get(index, j)).sum()
    }

    /// Items whose actual class is `index`.
    pub fn col_sum(&self, index: usize) -> u64 {
        (0..self.size).map(|i| self.get(i, index)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(shape_err!("cannot merge {}×{} into {}×{}", other.size, other.size, self.size, self.size));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Reorders classes: index `i` of the result holds old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ConfusionMatrix {
        let mut out = ConfusionMatrix::new(self.size);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                out.add(i, j, self.get(pi, pj));
            }
        }
        out
    }

    /// CSV with a header row and a leading column of class names.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        if names.len() != self.size {
            return Err(invalid!("{} class names for a {}-class matrix", names.len(), self.size));
        }
        let mut out = String::from("predicted\\actual");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, n) in names.iter().enumerate() {
            out.push_str(n);
            for j in 0..self.size {
                write!(out, ",{}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Adds one count per pixel at `[pred - 1][truth - 1]`.
pub fn accumulate_pixel_confusion(pred: &LabelImage, truth: &LabelImage, cm: &mut ConfusionMatrix) -> Result<()> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(shape_err!(
            "prediction {}×{} vs truth {}×{}",
            pred.height(),
            pred.width(),
            truth.height(),
            truth.width()
        ));
    }
    pred.validate(cm.size())?;
    truth.validate(cm.size())?;
    for (&p, &t) in pred.classes().iter().zip(truth.classes()) {
        cm.add(p as usize - 1, t as usize - 1, 1);
    }
    Ok(())
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn binary_counts(cm: &ConfusionMatrix, index: usize) -> BinaryCounts {
    let tp = cm.get(index, index);
    let fp = cm.row_sum(index) - tp;
    let fn_ = cm.col_sum(index) - tp;
    BinaryCounts {
        tp,
        fp,
        fn_,
        tn: cm.total() - tp - fp - fn_,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Items whose actual class is this one.
    pub support: u64,
    /// False when the class never occurs in either prediction or truth.
    pub present: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1 and IoU from one-vs-rest counts.
///
/// A class with `tp + fp + fn = 0` scores 1 everywhere and is marked absent;
/// otherwise an empty denominator gives 0.
pub fn class_metrics(bc: BinaryCounts) -> ClassMetrics {
    let support = bc.tp + bc.fn_;
    if bc.tp + bc.fp + bc.fn_ == 0 {
        return ClassMetrics {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            iou: 1.0,
            support,
            present: false,
        };
    }
    let precision = ratio(bc.tp, bc.tp + bc.fp);
    let recall = ratio(bc.tp, bc.tp + bc.fn_);
    ClassMetrics {
        precision,
        recall,
        f1: ratio(2 * bc.tp, 2 * bc.tp + bc.fp + bc.fn_),
        iou: ratio(bc.tp, bc.tp + bc.fp + bc.fn_),
        support,
        present: true,
    }
}

/// Class-averaged precision, recall, F1 and IoU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Number of classes entering the mean.
    pub classes: usize,
}

impl Averages {
    fn over<'a>(items: impl Iterator<Item = &'a ClassMetrics>) -> Averages {
        let mut a = Averages {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            iou: 0.0,
            classes: 0,
        };
        for m in items {
            a.precision += m.precision;
            a.recall += m.recall;
            a.f1 += m.f1;
            a.iou += m.iou;
            a.classes += 1;
        }
        if a.classes > 0 {
            let n = a.classes as f64;
            a.precision /= n;
            a.recall /= n;
            a.f1 /= n;
            a.iou /= n;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: u8,
    pub name: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

/// Per-class pixel metrics and their averages.
///
/// Averages only include classes with ground-truth support in the
/// evaluated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassEntry>,
    pub average_all: Averages,
    pub average_targets: Averages,
    pub pixel_confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn class(&self, class_id: u8) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|e| e.class_id == class_id).map(|e| &e.metrics)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.per_class.iter().map(|e| e.name.clone()).collect()
    }

    /// Plain-text table with Precision, Recall, F1 and IoU columns.
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<12} {:>9} {:>9} {:>9} {:>9}\n", "class", "precision", "recall", "f1", "iou");
        let mut row = |name: &str, p: f64, r: f64, f: f64, i: f64| {
            writeln!(out, "{name:<12} {p:>9.4} {r:>9.4} {f:>9.4} {i:>9.4}").unwrap();
        };
        for e in &self.per_class {
            let m = &e.metrics;
            row(&e.name, m.precision, m.recall, m.f1, m.iou);
        }
        let (a, t) = (&self.average_all, &self.average_targets);
        row(&format!("avg all({})", a.classes), a.precision, a.recall, a.f1, a.iou);
        row(&format!("avg tgt({})", t.classes), t.precision, t.recall, t.f1, t.iou);
        out
    }

    /// One CSV row per class followed by the two averages.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,iou,support\n");
        for e in &self.per_class {
            let m = &e.metrics;
            writeln!(out, "{},{},{},{},{},{}", e.name, m.precision, m.recall, m.f1, m.iou, m.support).unwrap();
        }
        for (name, a) in [("average_all", &self.average_all), ("average_targets", &self.average_targets)] {
            writeln!(out, "{name},{},{},{},{},", a.precision, a.recall, a.f1, a.iou).unwrap();
        }
        out
    }
}

/// Report for a pixel confusion matrix over the standard alphabet: class id
/// `i + 1` at index `i`, background first and front last.
pub fn build_report(cm: &ConfusionMatrix, names: &[String]) -> Result<MetricsReport> {
    let n = cm.size();
    if n < 3 {
        return Err(invalid!("need at least background, one target and front classes"));
    }
    if names.len() != n {
        return Err(invalid!("{} class names for {n} classes", names.len()));
    }
    let per_class: Vec<ClassEntry> = (0..n)
        .map(|i| ClassEntry {
            class_id: i as u8 + 1,
            name: names[i].clone(),
            metrics: class_metrics(binary_counts(cm, i)),
        })
        .collect();
    let targets = target_classes(n);
    let supported = |e: &&ClassEntry| e.metrics.support > 0;
    Ok(MetricsReport {
        average_all: Averages::over(per_class.iter().filter(supported).map(|e| &e.metrics)),
        average_targets: Averages::over(
            per_class
                .iter()
                .filter(supported)
                .filter(|e| targets.contains(&e.class_id))
                .map(|e| &e.metrics),
        ),
        per_class,
        pixel_confusion: cm.clone(),
    })
}

/// How a probability map is reduced to a single chip class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRule {
    /// Most frequent target class among pixels whose overall argmax is a
    /// target; falls back to summed probability when there are none.
    #[default]
    Majority,
    /// Target class with the largest summed probability over the chip.
    SummedProbability,
}

impl std::str::FromStr for VoteRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(VoteRule::Majority),
            "summed" | "summed_probability" => Ok(VoteRule::SummedProbability),
            other => Err(invalid!("unknown vote rule {other:?} (expected majority or summed)")),
        }
    }
}

/// Classifies a chip from its per-pixel scores. Returns a target class id.
pub fn chip_classify(scores: &ScoreMap, rule: VoteRule) -> Result<u8> {
    let nc = scores.num_classes();
    if nc < 3 {
        return Err(invalid!("score map needs at least 3 classes, has {nc}"));
    }
    let targets = target_classes(nc);
    if rule == VoteRule::Majority {
        let mut votes = vec![0usize; nc + 1];
        for c in scores.argmax().classes() {
            if targets.contains(c) {
                votes[*c as usize] += 1;
            }
        }
        let best = targets.clone().max_by_key(|&c| (votes[c as usize], std::cmp::Reverse(c))).unwrap();
        if votes[best as usize] > 0 {
            return Ok(best);
        }
    }
    let plane = scores.height() * scores.width();
    let data = scores.values().data();
    let mass = |c: u8| -> f64 {
        let start = (c as usize - 1) * plane;
        data[start..start + plane].iter().map(|&v| v as f64).sum()
    };
    let mut best = *targets.start();
    let mut best_mass = mass(best);
    for c in targets.skip(1) {
        let m = mass(c);
        if m > best_mass {
            best = c;
            best_mass = m;
        }
    }
    Ok(best)
}

/// Chip-level confusion over the target classes with accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipReport {
    /// Indexed by `class_id - 2`.
    pub confusion: ConfusionMatrix,
    /// Diagonal over column sum; `None` for classes without chips.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Mean of the defined per-class accuracies.
    pub average: f64,
    pub overall: f64,
    pub chips: u64,
}

impl ChipReport {
    /// Accuracies from an already assembled target-class confusion matrix.
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<ChipReport> {
        let chips = confusion.total();
        if chips == 0 {
            return Err(invalid!("no chips to score"));
        }
        let per_class_accuracy: Vec<Option<f64>> = (0..confusion.size())
            .map(|j| {
                let col = confusion.col_sum(j);
                (col > 0).then(|| confusion.get(j, j) as f64 / col as f64)
            })
            .collect();
        let defined: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
        Ok(ChipReport {
            average: defined.iter().sum::<f64>() / defined.len() as f64,
            overall: confusion.trace() as f64 / chips as f64,
            per_class_accuracy,
            confusion,
            chips,
        })
    }
}

/// Builds the chip report from `(predicted, actual)` target class ids.
pub fn chip_confusion(predictions: &[(u8, u8)], num_classes: usize) -> Result<ChipReport> {
    let targets = target_classes(num_classes);
    let first = *targets.start();
    let mut cm = ConfusionMatrix::new(targets.clone().count());
    for &(p, a) in predictions {
        if !targets.contains(&p) || !targets.contains(&a) {
            return Err(invalid!("chip classes ({p}, {a}) outside target range {targets:?}"));
        }
        cm.add((p - first) as usize, (a - first) as usize, 1);
    }
    ChipReport::from_confusion(cm)
}

/// IoU of the `class_id`-vs-rest masks of `pred` and `truth`.
pub fn per_image_iou(pred: &LabelImage, truth: &LabelImage, class_id: u8) -> Result<f64> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(shape_err!("prediction and truth sizes differ"));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    let mut present = false;
    for (&p, &t) in pred.classes().iter().zip(truth.classes()) {
        let (a, b) = (p == class_id, t == class_id);
        present |= b;
        inter += (a && b) as u64;
        union += (a || b) as u64;
    }
    if !present {
        return Err(invalid!("truth has no pixel of class {class_id}"));
    }
    Ok(inter as f64 / union as f64)
}

pub const HISTOGRAM_BINS: usize = 20;

/// Summary of per-image IoU values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouDistribution {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    /// Counts over `[0, 1]` in bins of width 0.05; 1.0 falls in the last bin.
    pub histogram: Vec<u64>,
    /// Ascending values.
    sorted: Vec<f64>,
}

pub fn iou_distribution(values: &[f64]) -> Result<IouDistribution> {
    if values.is_empty() {
        return Err(invalid!("IoU distribution of an empty list"));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid!("IoU value {v} outside [0, 1]"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for &v in values {
        let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(IouDistribution {
        values: values.to_vec(),
        mean,
        std_dev: var.sqrt(),
        histogram,
        sorted,
    })
}

impl IouDistribution {
    /// Fraction of values `≤ t`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    /// `(value, cumulative fraction)` at each distinct value.
    pub fn ecdf_points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            match pts.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => pts.push((v, (i + 1) as f64 / n)),
            }
        }
        pts
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        let w = 1.0 / HISTOGRAM_BINS as f64;
        for (i, c) in self.histogram.iter().enumerate() {
            writeln!(out, "{:.2},{:.2},{c}", i as f64 * w, (i + 1) as f64 * w).unwrap();
        }
        out
    }

    pub fn ecdf_csv(&self) -> String {
        let mut out = String::from("iou,cumulative_fraction\n");
        for (v, f) in self.ecdf_points() {
            writeln!(out, "{v},{f}").unwrap();
        }
        out
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ScoreKind;
    use crate::tensor::Tensor;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn forced_indexing() {
        let mut cm = ConfusionMatrix::new(12);
        let p = LabelImage::new(1, 1, vec![2]).unwrap();
        let t = LabelImage::new(1, 1, vec![3]).unwrap();
        accumulate_pixel_confusion(&p, &t, &mut cm).unwrap();
        assert_eq!(cm.get(1, 2), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let t = LabelImage::new(2, 3, vec![1, 2, 12, 1, 5, 5]).unwrap();
        let mut cm = ConfusionMatrix::new(12);
        accumulate_pixel_confusion(&t, &t, &mut cm).unwrap();
        assert_eq!(cm.trace(), 6);
        let r = build_report(&cm, &names(12)).unwrap();
        for e in &r.per_class {
            assert_eq!(e.metrics.iou, 1.0);
            assert_eq!(e.metrics.present, e.metrics.support > 0);
        }
        assert_eq!(r.average_all.classes, 4);
        assert_eq!(r.average_targets.classes, 2);
    }

    #[test]
    fn shape_mismatch() {
        let a = LabelImage::filled(2, 2, 1).unwrap();
        let b = LabelImage::filled(2, 3, 1).unwrap();
        let mut cm = ConfusionMatrix::new(12);
        assert!(matches!(accumulate_pixel_confusion(&a, &b, &mut cm), Err(Error::Shape(_))));
    }

    #[test]
    fn empty_matrix_counts() {
        assert_eq!(binary_counts(&ConfusionMatrix::new(4), 2), BinaryCounts::default());
    }

    #[test]
    fn absent_class_convention() {
        let m = class_metrics(BinaryCounts { tp: 0, fp: 0, fn_: 0, tn: 10 });
        assert!(!m.present);
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));
        let m = class_metrics(BinaryCounts { tp: 0, fp: 0, fn_: 3, tn: 10 });
        assert!(m.present);
        assert_eq!((m.precision, m.recall, m.iou), (0.0, 0.0, 0.0));
    }

    fn score_map(h: usize, w: usize, f: impl Fn(usize, usize) -> usize) -> ScoreMap {
        // pixel i gets probability 0.9 on class f(i) (0-based), rest spread
        let mut data = vec![0.1 / 11.0; 12 * h * w];
        for i in 0..h * w {
            data[f(i, 0) * h * w + i] = 0.9;
        }
        ScoreMap::new(Tensor::from_vec(&[12, h, w], data).unwrap(), ScoreKind::Probabilities).unwrap()
    }

    #[test]
    fn vote_majority_and_tie() {
        let s = score_map(1, 10, |i, _| if i < 6 { 4 } else { 6 });
        assert_eq!(chip_classify(&s, VoteRule::Majority).unwrap(), 5);
        let s = score_map(1, 20, |i, _| if i < 10 { 1 } else { 8 });
        assert_eq!(chip_classify(&s, VoteRule::Majority).unwrap(), 2);
    }

    #[test]
    fn vote_fallback() {
        let (h, w) = (2, 2);
        let mut data = vec![0.0; 12 * h * w];
        for i in 0..h * w {
            data[i] = 0.8;
            data[6 * h * w + i] = 0.15;
            data[2 * h * w + i] = 0.05;
        }
        let s = ScoreMap::new(Tensor::from_vec(&[12, h, w], data).unwrap(), ScoreKind::Probabilities).unwrap();
        assert_eq!(chip_classify(&s, VoteRule::Majority).unwrap(), 7);
        assert_eq!(chip_classify(&s, VoteRule::SummedProbability).unwrap(), 7);
    }

    #[test]
    fn chip_confusion_basics() {
        assert!(chip_confusion(&[], 12).is_err());
        assert!(chip_confusion(&[(1, 2)], 12).is_err());
        let r = chip_confusion(&[(2, 2), (3, 3), (11, 11)], 12).unwrap();
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.average, 1.0);
        assert_eq!(r.per_class_accuracy[1], Some(1.0));
        assert_eq!(r.per_class_accuracy[2], None);
    }

    #[test]
    fn per_image_iou_cases() {
        let t = LabelImage::new(1, 4, vec![3, 3, 1, 1]).unwrap();
        assert_eq!(per_image_iou(&t, &t, 3).unwrap(), 1.0);
        let miss = LabelImage::filled(1, 4, 1).unwrap();
        assert_eq!(per_image_iou(&miss, &t, 3).unwrap(), 0.0);
        let half = LabelImage::new(1, 4, vec![1, 3, 3, 1]).unwrap();
        assert!((per_image_iou(&half, &t, 3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(per_image_iou(&t, &t, 4).is_err());
    }

    #[test]
    fn distribution_closed_forms() {
        let d = iou_distribution(&[0.5]).unwrap();
        assert_eq!((d.mean, d.std_dev, d.ecdf(0.5)), (0.5, 0.0, 1.0));
        let d = iou_distribution(&[0.0, 1.0]).unwrap();
        assert_eq!((d.mean, d.std_dev), (0.5, 0.5));
        assert_eq!(d.histogram[0], 1);
        assert_eq!(d.histogram[19], 1);
        assert_eq!(d.ecdf(1.0), 1.0);
        assert_eq!(d.ecdf(0.99), 0.5);
        assert!(iou_distribution(&[]).is_err());
        assert!(iou_distribution(&[1.5]).is_err());
    }

    #[test]
    fn csv_has_headers() {
        let mut cm = ConfusionMatrix::new(2);
        cm.add(0, 1, 3);
        let csv = cm.to_csv(&["a".into(), "b".into()]).unwrap();
        assert_eq!(csv, "predicted\\actual,a,b\na,0,3\nb,0,0\n");
    }
}
