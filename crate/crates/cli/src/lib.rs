//! Batch command-line pipeline: synthetic data generation, training,
//! evaluation, single-image inference, mosaic scenes and report rendering.
//!
//! Every subcommand resolves its settings from built-in defaults, an
//! optional `--config FILE` (a JSON object with the same keys) and the
//! flags given, in increasing precedence, and records the result as
//! `effective_config.json`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use versnet::metrics::{MetricsReport, VoteRule};
use versnet::pnm::{self, BitDepth};
use versnet::rng::mix_seed;
use versnet::synth::{
    apply_exclusions, compose_mosaic, footprint_majority, gen_dataset, read_exclusion_list, DatasetManifest,
    DatasetOptions, SceneSpec, Split, NUM_TARGET_TYPES,
};
use versnet::train::{self, EvalOptions, EvalReport, StepDecay, TrainConfig};
use versnet::{Error, LabelImage, NetworkParams, Prng, ScoreMap, VersNetConfig};

mod config;
pub mod palette;

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

/// Exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const SCHEMA: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: exit::IO,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Parse { .. } => exit::IO,
            Error::NonFinite { .. } => exit::NUMERIC,
            Error::Alphabet(_) | Error::Format(_) | Error::InvalidLabel(_) => exit::SCHEMA,
            Error::InvalidArgument(_) | Error::Shape(_) | Error::OutOfRange(_) => exit::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "versnet", version, about = "End-to-end SAR target recognition with a fully convolutional network")]
pub struct Cli {
    /// JSON file with settings; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic chip dataset with a manifest.
    GenData(GenDataFlags),
    /// Train a network on a dataset.
    Train(TrainFlags),
    /// Evaluate a checkpoint and write metrics reports.
    Eval(EvalFlags),
    /// Label one image and render it with the class palette.
    Infer(InferFlags),
    /// Render a multi-target scene and optionally label it.
    Mosaic(MosaicFlags),
    /// Print a metrics report as a table or CSV.
    Report(ReportFlags),
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataFlags {
    /// Number of target classes (1..=10).
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub chip_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset root; chips go to `<out>/<split>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// train or test.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataSettings {
    pub classes: usize,
    pub per_class: usize,
    pub chip_size: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub split: Split,
}

impl Default for GenDataSettings {
    fn default() -> Self {
        Self {
            classes: NUM_TARGET_TYPES,
            per_class: 10,
            chip_size: 64,
            seed: 0,
            out: None,
            split: Split::Train,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainFlags {
    /// Dataset split directory (or its manifest.json).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out split evaluated during and after training.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint (and evaluate) every this many epochs; 0 for final only.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Channels of the four encoder blocks, e.g. 8,16,32,64.
    #[arg(long, value_delimiter = ',')]
    pub block_channels: Option<Vec<usize>>,
    #[arg(long)]
    pub fc_channels: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f32>,
    /// Multiply the learning rate by `decay_factor` every this many epochs.
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    /// majority or summed.
    #[arg(long)]
    pub vote: Option<VoteRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub eval_every: usize,
    pub block_channels: Vec<usize>,
    pub fc_channels: usize,
    pub dropout: f32,
    pub decay_every: Option<usize>,
    pub decay_factor: f64,
    pub vote: VoteRule,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let model = VersNetConfig::default();
        let train = TrainConfig::default();
        Self {
            data: None,
            eval_data: None,
            epochs: train.epochs,
            lr: train.learning_rate,
            momentum: train.momentum,
            seed: 0,
            out: None,
            eval_every: train.eval_every,
            block_channels: model.block_channels.to_vec(),
            fc_channels: model.fc_channels,
            dropout: model.dropout_rate,
            decay_every: None,
            decay_factor: 0.1,
            vote: VoteRule::Majority,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvalFlags {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory for the report files.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Chip ids to leave out, one per line.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    #[arg(long)]
    pub vote: Option<VoteRule>,
    /// Score the ground-truth labels instead of a network.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ground_truth: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub vote: VoteRule,
    pub ground_truth: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct InferFlags {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output prefix: writes PREFIX_label.pgm and PREFIX_atr.ppm.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSettings {
    pub image: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MosaicFlags {
    /// Scene JSON; without it a grid scene is generated.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of targets in a generated grid scene.
    #[arg(long)]
    pub targets: Option<usize>,
    /// Side length of a generated grid scene.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also label the scene with this network.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MosaicSettings {
    pub scene: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub targets: usize,
    pub size: usize,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for MosaicSettings {
    fn default() -> Self {
        Self {
            scene: None,
            out: None,
            targets: 25,
            size: 512,
            seed: 0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportFlags {
    /// report.json written by `eval`, or a bare metrics report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub report: Option<PathBuf>,
    pub format: ReportFormat,
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| CliError::usage(format!("missing --{flag}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

/// `PREFIX` + `suffix`, creating the prefix's directory.
fn prefixed(prefix: &Path, suffix: &str) -> Result<PathBuf> {
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    Ok(PathBuf::from(s))
}

fn save_label_pair(label: &LabelImage, prefix: &Path, stem: &str) -> Result<()> {
    pnm::save_label(label, &prefixed(prefix, &format!("_{stem}.pgm"))?)?;
    let rgb = palette::render(label);
    pnm::save_ppm(label.width(), label.height(), &rgb, &prefixed(prefix, &format!("_{stem}_atr.ppm"))?)?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::GenData(f) => gen_data(config::resolve(f, config)?),
        Command::Train(f) => train_cmd(config::resolve(f, config)?),
        Command::Eval(f) => eval_cmd(config::resolve(f, config)?),
        Command::Infer(f) => infer(config::resolve(f, config)?),
        Command::Mosaic(f) => mosaic(config::resolve(f, config)?),
        Command::Report(f) => report(config::resolve(f, config)?),
    }
}

pub fn gen_data(s: GenDataSettings) -> Result<()> {
    let out = required(&s.out, "out")?;
    let manifest = gen_dataset(
        &DatasetOptions {
            num_classes: s.classes,
            num_per_class: s.per_class,
            chip_size: s.chip_size,
            split: s.split,
            seed: s.seed,
        },
        out,
    )?;
    config::write_effective(&s, &manifest.root.join(EFFECTIVE_CONFIG))?;
    let counts: Vec<String> = (2..2 + s.classes as u8)
        .map(|k| {
            let n = manifest.entries.iter().filter(|e| e.class_id == k).count();
            format!("{}={n}", manifest.class_names[k as usize - 1])
        })
        .collect();
    println!(
        "wrote {} {} chips to {}: {}",
        manifest.len(),
        s.split.as_str(),
        manifest.root.display(),
        counts.join(" ")
    );
    Ok(())
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let m = DatasetManifest::load(path)?;
    if m.is_empty() {
        return Err(CliError::usage(format!("dataset {} has no chips", path.display())));
    }
    Ok(m)
}

fn eval_options(manifest: &DatasetManifest, vote: VoteRule) -> EvalOptions {
    EvalOptions {
        class_names: manifest.class_names.clone(),
        vote_rule: vote,
    }
}

pub fn train_cmd(s: TrainSettings) -> Result<()> {
    let data = required(&s.data, "data")?;
    let out = required(&s.out, "out")?;
    let block_channels: [usize; 4] = s
        .block_channels
        .clone()
        .try_into()
        .map_err(|_| CliError::usage("block_channels needs exactly four values"))?;
    let manifest = load_manifest(data)?;
    let model = VersNetConfig {
        num_classes: manifest.num_classes,
        block_channels,
        fc_channels: s.fc_channels,
        dropout_rate: s.dropout,
        ..Default::default()
    };
    let config = TrainConfig {
        learning_rate: s.lr,
        momentum: s.momentum,
        epochs: s.epochs,
        seed: s.seed,
        eval_every: s.eval_every,
        checkpoint_dir: Some(out.to_path_buf()),
        decay: s.decay_every.map(|every| StepDecay {
            every,
            factor: s.decay_factor,
        }),
    };
    config.validate()?;
    let net = NetworkParams::build(&model, &mut Prng::new(mix_seed(s.seed, 0x1417)))?;
    let chips = manifest.load_chips()?;
    let held_out = match &s.eval_data {
        Some(p) => {
            let m = load_manifest(p)?;
            if m.num_classes != manifest.num_classes {
                return Err(Error::Alphabet(format!(
                    "evaluation set has {} classes, training set {}",
                    m.num_classes, manifest.num_classes
                ))
                .into());
            }
            Some((m.load_chips()?, eval_options(&m, s.vote)))
        }
        None => None,
    };
    create_dir(out)?;
    config::write_effective(&s, &out.join(EFFECTIVE_CONFIG))?;
    let eval = held_out.as_ref().map(|(c, o)| (c.as_slice(), o));
    let outcome = train::train(&config, net, &chips, eval)?;
    let last = outcome.log.last().expect("at least one epoch");
    let iou = match last.eval_mean_iou {
        Some(v) => v,
        None => {
            train::evaluate(&outcome.net, &chips, &eval_options(&manifest, s.vote))?
                .metrics
                .average_targets
                .iou
        }
    };
    println!(
        "trained {} epochs on {} chips: final loss {:.5}, mean target IoU {:.4} ({})",
        last.epoch,
        chips.len(),
        last.mean_loss,
        iou,
        if s.eval_data.is_some() { "held-out" } else { "training set" }
    );
    Ok(())
}

pub fn eval_cmd(s: EvalSettings) -> Result<()> {
    let data = required(&s.data, "data")?;
    let out = required(&s.report, "report")?;
    let mut manifest = load_manifest(data)?;
    if let Some(list) = &s.exclusions {
        let ids = read_exclusion_list(list)?;
        let (kept, summary) = apply_exclusions(&manifest, &ids);
        log::info!("excluded {} chips ({} ids unmatched)", summary.removed, summary.unknown);
        manifest = kept;
        if manifest.is_empty() {
            return Err(CliError::usage("every chip was excluded"));
        }
    }
    let chips = manifest.load_chips()?;
    let opts = eval_options(&manifest, s.vote);
    let report: EvalReport = if s.ground_truth {
        train::evaluate_with(&chips, manifest.num_classes, &opts, |c| {
            ScoreMap::one_hot(&c.label, manifest.num_classes)
        })?
    } else {
        let (net, _) = NetworkParams::load_checkpoint(required(&s.checkpoint, "checkpoint")?)?;
        if net.config().num_classes != manifest.num_classes {
            return Err(Error::Alphabet(format!(
                "checkpoint predicts {} classes, dataset uses {}",
                net.config().num_classes,
                manifest.num_classes
            ))
            .into());
        }
        train::evaluate(&net, &chips, &opts)?
    };
    train::write_eval_outputs(&report, out)?;
    config::write_effective(&s, &out.join(EFFECTIVE_CONFIG))?;
    println!(
        "{} chips: overall chip accuracy {:.2}%, mean target IoU {:.4}, mean per-image IoU {:.4} (std {:.4})",
        report.chips,
        100.0 * report.chip_classification.overall,
        report.metrics.average_targets.iou,
        report.iou.mean,
        report.iou.std_dev
    );
    Ok(())
}

pub fn infer(s: InferSettings) -> Result<()> {
    let image = pnm::load_image(required(&s.image, "image")?)?;
    let (net, _) = NetworkParams::load_checkpoint(required(&s.checkpoint, "checkpoint")?)?;
    let out = required(&s.out, "out")?;
    let label = net.predict(&image)?;
    save_label_pair(&label, out, "label")?;
    std::fs::rename(prefixed(out, "_label_atr.ppm")?, prefixed(out, "_atr.ppm")?)
        .map_err(|e| CliError::io(e.to_string()))?;
    config::write_effective(&s, &prefixed(out, &format!("_{EFFECTIVE_CONFIG}"))?)?;
    let hist = label.histogram(net.config().num_classes);
    let found: Vec<String> = hist
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &n)| n > 0)
        .map(|(i, n)| format!("class {i}: {n} px"))
        .collect();
    println!("labeled {}×{} image; {}", label.height(), label.width(), found.join(", "));
    Ok(())
}

/// Per-placement outcome of labeling a mosaic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementResult {
    pub class_id: u8,
    pub predicted: Option<u8>,
}

pub fn mosaic(s: MosaicSettings) -> Result<()> {
    let out = required(&s.out, "out")?;
    let scene: SceneSpec = match &s.scene {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        }
        None => SceneSpec::grid(s.size, s.size, s.targets, s.seed)?,
    };
    let (image, truth) = compose_mosaic(&scene)?;
    pnm::save_image(&image, &prefixed(out, "_image.pgm")?, BitDepth::Sixteen)?;
    save_label_pair(&truth, out, "truth")?;
    let scene_json = serde_json::to_string_pretty(&scene).map_err(|e| Error::Format(e.to_string()))?;
    let scene_path = prefixed(out, "_scene.json")?;
    std::fs::write(&scene_path, scene_json + "\n").map_err(|e| CliError::io(format!("{}: {e}", scene_path.display())))?;
    config::write_effective(&s, &prefixed(out, &format!("_{EFFECTIVE_CONFIG}"))?)?;
    let mut line = format!(
        "{}×{} scene with {} targets written",
        scene.height,
        scene.width,
        scene.placements.len()
    );
    if let Some(ckpt) = &s.checkpoint {
        let (net, _) = NetworkParams::load_checkpoint(ckpt)?;
        let pred = net.predict(&image)?;
        save_label_pair(&pred, out, "pred")?;
        let results: Vec<PlacementResult> = scene
            .placements
            .iter()
            .map(|p| PlacementResult {
                class_id: p.target.class_id,
                predicted: footprint_majority(&pred, &p.target),
            })
            .collect();
        let correct = results.iter().filter(|r| r.predicted == Some(r.class_id)).count();
        let path = prefixed(out, "_placements.json")?;
        let json = serde_json::to_string_pretty(&results).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        line += &format!("; {correct}/{} targets classified correctly", results.len());
    }
    println!("{line}");
    Ok(())
}

/// Renders a report file as a per-class table or CSV.
pub fn render_report(path: &Path, format: ReportFormat) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let (metrics, chips): (MetricsReport, Option<EvalReport>) = match serde_json::from_str::<EvalReport>(&text) {
        Ok(r) => (r.metrics.clone(), Some(r)),
        Err(_) => (
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
            None,
        ),
    };
    Ok(match format {
        ReportFormat::Csv => metrics.render_csv(),
        ReportFormat::Text => {
            let mut out = metrics.render_table();
            if let Some(r) = chips {
                let c = &r.chip_classification;
                out += &format!(
                    "\nchips {}  overall accuracy {:.2}%  average accuracy {:.2}%\nper-image IoU mean {:.4}  std {:.4}  P(IoU <= 0.5) {:.4}\n",
                    c.chips,
                    100.0 * c.overall,
                    100.0 * c.average,
                    r.iou.mean,
                    r.iou.std_dev,
                    r.iou.ecdf(0.5)
                );
            }
            out
        }
    })
}

pub fn report(s: ReportSettings) -> Result<()> {
    print!("{}", render_report(required(&s.report, "report")?, s.format)?);
    Ok(())
}
