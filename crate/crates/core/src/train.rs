//! Per-chip SGD training with momentum, evaluation and the training log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{target_classes, ScoreMap};
use crate::metrics::{
    accumulate_pixel_confusion, build_report, chip_classify, chip_confusion, iou_distribution, per_image_iou,
    ChipReport, ConfusionMatrix, IouDistribution, MetricsReport, VoteRule,
};
use crate::model::NetworkParams;
use crate::nn::{sgd_momentum_step, MomentumState};
use crate::rng::{mix_seed, Prng};
use crate::synth::Chip;

pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.vnck";

/// Multiply the learning rate by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate and checkpoint every this many epochs; 0 disables both
    /// (the final checkpoint is still written).
    pub eval_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub decay: Option<StepDecay>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 10,
            seed: 0,
            eval_every: 1,
            checkpoint_dir: None,
            decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!("learning rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.epochs == 0 {
            return Err(invalid!("epochs must be >= 1"));
        }
        if let Some(d) = self.decay {
            if d.every == 0 || !(d.factor > 0.0 && d.factor.is_finite()) {
                return Err(invalid!("step decay needs every >= 1 and a positive factor"));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.decay {
            Some(d) => self.learning_rate * d.factor.powi(((epoch - 1) / d.every) as i32),
            None => self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub eval_mean_iou: Option<f64>,
    pub seconds: f64,
}

impl TrainLogRecord {
    pub const CSV_HEADER: &'static str = "epoch,mean_loss,eval_mean_iou,seconds";

    pub fn csv_line(&self) -> String {
        let iou = self.eval_mean_iou.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{iou},{:.3}", self.epoch, self.mean_loss, self.seconds)
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: NetworkParams,
    pub momentum: MomentumState,
    pub log: Vec<TrainLogRecord>,
}

/// Options shared by all evaluation entry points.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub class_names: Vec<String>,
    pub vote_rule: VoteRule,
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.vnck")
}

/// Trains `net` in place on `chips` for `config.epochs` epochs.
///
/// Each epoch visits the chips in an order shuffled from `(seed, epoch)`
/// and applies one momentum step per chip. When `eval` is given, it is
/// evaluated every `eval_every` epochs and its mean target IoU is logged.
/// With a checkpoint directory, checkpoints and `train_log.csv` are written
/// there.
pub fn train(
    config: &TrainConfig,
    mut net: NetworkParams,
    chips: &[Chip],
    eval: Option<(&[Chip], &EvalOptions)>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if chips.is_empty() {
        return Err(invalid!("training set is empty"));
    }
    let nc = net.config().num_classes;
    for c in chips {
        c.label.validate(nc).map_err(|e| Error::Alphabet(format!("chip {}: {e}", c.id)))?;
    }
    let log_path = match &config.checkpoint_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOG_FILE);
            fs::write(&path, format!("{}\n", TrainLogRecord::CSV_HEADER)).map_err(|e| Error::io(&path, e))?;
            Some(path)
        }
        None => None,
    };

    let mut momentum = MomentumState::zeros_like(net.tensors());
    let mut dropout_rng = Prng::new(mix_seed(config.seed, 0xD809));
    let mut order: Vec<usize> = (0..chips.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        Prng::new(mix_seed(config.seed, epoch as u64)).shuffle(&mut order);
        let lr = config.learning_rate_at(epoch) as f32;
        let mut loss_sum = 0.0;
        for &i in &order {
            let chip = &chips[i];
            let (loss, grads) = net.forward_backward(&chip.image, &chip.label, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    chip: chip.id.clone(),
                });
            }
            loss_sum += loss;
            let g = grads.tensors();
            sgd_momentum_step(&mut net.tensors_mut(), &g, &mut momentum, lr, config.momentum as f32)?;
        }
        let periodic = config.eval_every > 0 && epoch % config.eval_every == 0;
        let eval_mean_iou = match eval {
            Some((set, opts)) if periodic || epoch == config.epochs => {
                Some(evaluate(&net, set, opts)?.metrics.average_targets.iou)
            }
            _ => None,
        };
        let record = TrainLogRecord {
            epoch,
            mean_loss: loss_sum / chips.len() as f64,
            eval_mean_iou,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5}{}",
            record.mean_loss,
            eval_mean_iou.map(|v| format!(", eval IoU {v:.4}")).unwrap_or_default()
        );
        if let (Some(dir), Some(path)) = (&config.checkpoint_dir, &log_path) {
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "{}", record.csv_line()).map_err(|e| Error::io(path, e))?;
            if periodic {
                net.save_checkpoint(&dir.join(checkpoint_name(epoch)), Some(&momentum))?;
            }
        }
        log.push(record);
    }
    if let Some(dir) = &config.checkpoint_dir {
        net.save_checkpoint(&dir.join(FINAL_CHECKPOINT), Some(&momentum))?;
    }
    Ok(TrainOutcome { net, momentum, log })
}

/// Pixel metrics, chip classification and per-image IoU over a chip set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub chips: usize,
    pub metrics: MetricsReport,
    pub chip_classification: ChipReport,
    pub iou: IouDistribution,
}

/// Evaluates a network in evaluation mode.
pub fn evaluate(net: &NetworkParams, chips: &[Chip], opts: &EvalOptions) -> Result<EvalReport> {
    let nc = net.config().num_classes;
    evaluate_with(chips, nc, opts, |chip| net.probabilities(&chip.image))
}

/// Evaluates an arbitrary per-chip probability predictor.
pub fn evaluate_with(
    chips: &[Chip],
    num_classes: usize,
    opts: &EvalOptions,
    mut predictor: impl FnMut(&Chip) -> Result<ScoreMap>,
) -> Result<EvalReport> {
    if chips.is_empty() {
        return Err(invalid!("evaluation set is empty"));
    }
    if opts.class_names.len() != num_classes {
        return Err(Error::Alphabet(format!(
            "{} class names for a {num_classes}-class network",
            opts.class_names.len()
        )));
    }
    let targets = target_classes(num_classes);
    let mut cm = ConfusionMatrix::new(num_classes);
    let mut votes = Vec::with_capacity(chips.len());
    let mut ious = Vec::with_capacity(chips.len());
    for chip in chips {
        chip.label
            .validate(num_classes)
            .map_err(|e| Error::Alphabet(format!("chip {}: {e}", chip.id)))?;
        if !targets.contains(&chip.class_id) {
            return Err(Error::Alphabet(format!("chip {} has non-target class {}", chip.id, chip.class_id)));
        }
        let scores = predictor(chip)?;
        if scores.num_classes() != num_classes {
            return Err(Error::Alphabet(format!(
                "predictor produced {} classes, expected {num_classes}",
                scores.num_classes()
            )));
        }
        let pred = scores.argmax();
        accumulate_pixel_confusion(&pred, &chip.label, &mut cm)?;
        votes.push((chip_classify(&scores, opts.vote_rule)?, chip.class_id));
        ious.push(per_image_iou(&pred, &chip.label, chip.class_id)?);
    }
    Ok(EvalReport {
        chips: chips.len(),
        metrics: build_report(&cm, &opts.class_names)?,
        chip_classification: chip_confusion(&votes, num_classes)?,
        iou: iou_distribution(&ious)?,
    })
}

/// Writes `report.json`, the two confusion CSVs and the IoU histogram and
/// ECDF CSVs into `dir`.
pub fn write_eval_outputs(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    crate::metrics::write_json(report, &dir.join("report.json"))?;
    let names = report.metrics.class_names();
    write("pixel_confusion.csv", report.metrics.pixel_confusion.to_csv(&names)?)?;
    let nc = names.len();
    write("chip_confusion.csv", report.chip_classification.confusion.to_csv(&names[1..nc - 1])?)?;
    write("iou_histogram.csv", report.iou.histogram_csv())?;
    write("iou_ecdf.csv", report.iou.ecdf_csv())
}
