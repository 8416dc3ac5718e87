//! Synthetic SAR-like target chips, multi-target scenes and dataset manifests.
//!
//! Ten parametric silhouettes stand in for the ten target types. A rendered
//! target is a bright silhouette with a dark shadow trailing behind it (away
//! from the pose direction) over a uniform clutter level; the whole scene is
//! then multiplied by single-look speckle (unit-mean exponential) and
//! clamped to `[0, 1]`.
//!
//! Labels: 1 background (shadow included), `2..=11` the silhouette of
//! `T01..T10`, 12 a front arc on the silhouette edge within ±45° of the pose.
//!
//! Pose convention: 0° points along +column, 90° along −row.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{LabelImage, SarImage, BACKGROUND, FRONT, NUM_CLASSES};
use crate::pnm::{self, BitDepth};
use crate::rng::{mix_seed, Prng};

pub const GENERATOR_VERSION: &str = "versnet-synth/1";
pub const NUM_TARGET_TYPES: usize = 10;
pub const MIN_CHIP_SIZE: usize = 32;

const CLUTTER_LEVEL: f64 = 0.08;
const SHADOW_LEVEL: f64 = 0.025;
const TARGET_LEVEL: f64 = 0.6;
const FRONT_BOOST: f64 = 0.2;
/// Shadow length at scale 1, in pixels.
const SHADOW_LENGTH: f64 = 6.0;
/// Width of the edge band eligible for the front class.
const FRONT_BAND: usize = 2;
const FRONT_HALF_ANGLE_DEG: f64 = 45.0;

/// Target class names for synthetic data (class ids 2..=11).
pub const SYNTHETIC_TARGET_NAMES: [&str; NUM_TARGET_TYPES] =
    ["T01", "T02", "T03", "T04", "T05", "T06", "T07", "T08", "T09", "T10"];

/// Target class names for pre-converted MSTAR chips.
pub const MSTAR_TARGET_NAMES: [&str; NUM_TARGET_TYPES] =
    ["2S1", "BMP2", "BRDM2", "BTR60", "BTR70", "D7", "T62", "T72", "ZIL131", "ZSU234"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassNaming {
    #[default]
    Synthetic,
    Mstar,
}

/// Names for class ids `1..=12`, index 0 holding class 1.
pub fn class_names(naming: ClassNaming) -> Vec<String> {
    let targets = match naming {
        ClassNaming::Synthetic => SYNTHETIC_TARGET_NAMES,
        ClassNaming::Mstar => MSTAR_TARGET_NAMES,
    };
    std::iter::once("background")
        .chain(targets)
        .chain(std::iter::once("front"))
        .map(String::from)
        .collect()
}

/// Whether the point `(u, v)` (forward, lateral; scale 1) lies on silhouette `kind`.
fn silhouette_contains(kind: usize, u: f64, v: f64) -> bool {
    let (au, av) = (u.abs(), v.abs());
    match kind {
        // ellipse
        0 => (u / 13.0).powi(2) + (v / 6.5).powi(2) <= 1.0,
        // rectangle
        1 => au <= 12.0 && av <= 6.0,
        // T with crossbar at the front
        2 => (av <= 2.5 && (-12.0..=10.0).contains(&u)) || ((6.0..=12.0).contains(&u) && av <= 10.0),
        // L
        3 => ((-7.0..=-2.0).contains(&v) && au <= 12.0) || ((-12.0..=-6.0).contains(&u) && (-7.0..=7.0).contains(&v)),
        // hull with a wide round turret
        4 => (au <= 11.0 && av <= 4.5) || u * u + v * v <= 49.0,
        // hull, rear turret and long barrel
        5 => (au <= 10.0 && av <= 5.5) || (u + 3.0).powi(2) + v * v <= 25.0 || (av <= 1.2 && (0.0..=20.0).contains(&u)),
        // plus
        6 => (au <= 12.0 && av <= 3.0) || (au <= 3.0 && av <= 12.0),
        // diamond
        7 => au / 13.0 + av / 9.0 <= 1.0,
        // two-box truck with a gap
        8 => ((4.0..=12.0).contains(&u) && av <= 5.0) || ((-12.0..=1.0).contains(&u) && av <= 6.0),
        // wedge pointing forward
        9 => (-11.0..=12.0).contains(&u) && av <= 7.0 * (12.0 - u) / 23.0,
        _ => false,
    }
}

/// Largest distance from the origin to a silhouette point, per kind, at scale 1.
fn silhouette_radius(kind: usize) -> f64 {
    static RADII: OnceLock<[f64; NUM_TARGET_TYPES]> = OnceLock::new();
    RADII.get_or_init(|| {
        let mut radii = [0.0; NUM_TARGET_TYPES];
        for (k, r) in radii.iter_mut().enumerate() {
            for i in -100..=100 {
                for j in -100..=100 {
                    let (u, v) = (i as f64 * 0.25, j as f64 * 0.25);
                    if silhouette_contains(k, u, v) {
                        *r = f64::max(*r, (u * u + v * v).sqrt());
                    }
                }
            }
        }
        radii
    })[kind]
}

/// One target to render.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Label class id, `2..=11`.
    pub class_id: u8,
    /// Degrees in `[0, 360)`.
    pub pose: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// `(row, col)` of the silhouette origin.
    pub center: (f64, f64),
}

fn default_scale() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn new(class_id: u8, pose: f64, center: (f64, f64)) -> Self {
        Self {
            class_id,
            pose,
            scale: 1.0,
            center,
        }
    }

    fn kind(&self) -> usize {
        self.class_id as usize - 2
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=(NUM_TARGET_TYPES as u8 + 1)).contains(&self.class_id) {
            return Err(invalid!("target class {} outside 2..=11", self.class_id));
        }
        if !(0.0..360.0).contains(&self.pose) {
            return Err(invalid!("pose {} outside [0, 360)", self.pose));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid!("scale {} must be positive", self.scale));
        }
        if !(self.center.0.is_finite() && self.center.1.is_finite()) {
            return Err(invalid!("non-finite target center"));
        }
        Ok(())
    }

    /// Radius of the disc holding the silhouette at any pose.
    pub fn silhouette_radius(&self) -> f64 {
        silhouette_radius(self.kind()) * self.scale + 1.0
    }

    /// Radius of the square footprint holding the silhouette and its shadow.
    pub fn footprint_radius(&self) -> f64 {
        (silhouette_radius(self.kind()) + SHADOW_LENGTH) * self.scale + 1.0
    }

    /// Half-open pixel bounds `(row0, col0, row1, col1)` of the footprint.
    pub fn footprint(&self) -> (i64, i64, i64, i64) {
        square_bounds(self.center, self.footprint_radius())
    }

    /// Half-open pixel bounds of the silhouette disc.
    pub fn silhouette_bounds(&self) -> (i64, i64, i64, i64) {
        square_bounds(self.center, self.silhouette_radius())
    }
    fn forward(&self) -> (f64, f64) {
        let t = self.pose.to_radians();
        // (d_row, d_col)
        (-t.sin(), t.cos())
    }

    /// Local `(forward, lateral)` coordinates at scale 1.
    fn local(&self, row: f64, col: f64) -> (f64, f64) {
        let (fr, fc) = self.forward();
        let (dr, dc) = (row - self.center.0, col - self.center.1);
        let u = dr * fr + dc * fc;
        let v = dr * fc - dc * fr;
        (u / self.scale, v / self.scale)
    }

    fn contains(&self, row: f64, col: f64) -> bool {
        let (u, v) = self.local(row, col);
        silhouette_contains(self.kind(), u, v)
    }

    fn in_shadow(&self, row: f64, col: f64) -> bool {
        let (u, v) = self.local(row, col);
        (1..=6).any(|s| silhouette_contains(self.kind(), u + SHADOW_LENGTH * s as f64 / 6.0, v))
    }
}

fn square_bounds((cr, cc): (f64, f64), r: f64) -> (i64, i64, i64, i64) {
    (
        (cr - r).ceil() as i64,
        (cc - r).ceil() as i64,
        (cr + r).floor() as i64 + 1,
        (cc + r).floor() as i64 + 1,
    )
}

/// A target placement inside a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub target: TargetSpec,
    pub seed: u64,
}

/// A multi-target scene over shared clutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub noise_seed: u64,
}

impl SceneSpec {
    /// `count` targets on a regular grid, cycling through all target types,
    /// with random poses and small offsets.
    pub fn grid(height: usize, width: usize, count: usize, seed: u64) -> Result<SceneSpec> {
        if count == 0 {
            return Ok(SceneSpec {
                height,
                width,
                placements: vec![],
                noise_seed: seed,
            });
        }
        let side = (count as f64).sqrt().ceil() as usize;
        let rows = count.div_ceil(side);
        let (cell_h, cell_w) = (height as f64 / rows as f64, width as f64 / side as f64);
        let mut rng = Prng::new(mix_seed(seed, 0x5CE4E));
        let mut placements = Vec::with_capacity(count);
        for i in 0..count {
            let class_id = 2 + (i % NUM_TARGET_TYPES) as u8;
            let mut target = TargetSpec::new(class_id, rng.uniform() * 360.0, (0.0, 0.0));
            let slack_r = (cell_h / 2.0 - target.footprint_radius() - 1.0).clamp(0.0, 4.0);
            let slack_c = (cell_w / 2.0 - target.footprint_radius() - 1.0).clamp(0.0, 4.0);
            target.center = (
                (cell_h * ((i / side) as f64 + 0.5) + rng.uniform_range(-slack_r, slack_r)).round(),
                (cell_w * ((i % side) as f64 + 0.5) + rng.uniform_range(-slack_c, slack_c)).round(),
            );
            placements.push(Placement {
                target,
                seed: mix_seed(seed, i as u64 + 1),
            });
        }
        let scene = SceneSpec {
            height,
            width,
            placements,
            noise_seed: seed,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid!("scene must be non-empty"));
        }
        let boxes = self
            .placements
            .iter()
            .map(|p| {
                p.target.validate()?;
                let b = p.target.silhouette_bounds();
                if b.0 < 0 || b.1 < 0 || b.2 > self.height as i64 || b.3 > self.width as i64 {
                    return Err(invalid!(
                        "target at {:?} does not fit the {}×{} scene",
                        p.target.center,
                        self.height,
                        self.width
                    ));
                }
                Ok(p.target.footprint())
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, a) in boxes.iter().enumerate() {
            for (j, b) in boxes.iter().enumerate().skip(i + 1) {
                if a.0 < b.2 && b.0 < a.2 && a.1 < b.3 && b.1 < a.3 {
                    return Err(invalid!("placements {i} and {j} overlap"));
                }
            }
        }
        Ok(())
    }
}

fn render(scene: &SceneSpec) -> Result<(SarImage, LabelImage)> {
    scene.validate()?;
    let (h, w) = (scene.height, scene.width);
    let mut reflectivity = vec![CLUTTER_LEVEL; h * w];
    let mut label = LabelImage::filled(h, w, BACKGROUND)?;
    for p in &scene.placements {
        render_target(&p.target, p.seed, &mut reflectivity, &mut label);
    }
    let mut rng = Prng::new(scene.noise_seed);
    let pixels = reflectivity
        .iter()
        .map(|&r| (r * rng.exponential()).clamp(0.0, 1.0) as f32)
        .collect();
    Ok((SarImage::from_vec(h, w, pixels)?, label))
}

fn render_target(t: &TargetSpec, seed: u64, reflectivity: &mut [f64], label: &mut LabelImage) {
    let (r0, c0, r1, c1) = t.footprint();
    let (r0, c0) = (r0.max(0) as usize, c0.max(0) as usize);
    let (r1, c1) = ((r1 as usize).min(label.height()), (c1 as usize).min(label.width()));
    let (bh, bw) = (r1 - r0, c1 - c0);
    let width = label.width();
    let gain = 1.0 + 0.1 * (2.0 * Prng::new(seed).uniform() - 1.0);
    let half_length = silhouette_radius(t.kind());

    let mut mask = vec![false; bh * bw];
    for i in 0..bh {
        for j in 0..bw {
            let (row, col) = ((r0 + i) as f64, (c0 + j) as f64);
            let idx = (r0 + i) * width + c0 + j;
            if t.contains(row, col) {
                mask[i * bw + j] = true;
                let (u, _) = t.local(row, col);
                reflectivity[idx] = gain * (TARGET_LEVEL + FRONT_BOOST * (u / half_length).max(0.0));
                label.set(r0 + i, c0 + j, t.class_id);
            } else if t.in_shadow(row, col) {
                reflectivity[idx] = SHADOW_LEVEL;
            }
        }
    }

    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return;
    }
    let (mut sr, mut sc) = (0.0, 0.0);
    for (k, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        sr += (k / bw) as f64;
        sc += (k % bw) as f64;
    }
    let (cr, cc) = (sr / count as f64, sc / count as f64);
    let (fr, fc) = t.forward();
    let cos_limit = FRONT_HALF_ANGLE_DEG.to_radians().cos();
    let band = FRONT_BAND as i64;
    let outside = |i: i64, j: i64| i < 0 || j < 0 || i >= bh as i64 || j >= bw as i64 || !mask[i as usize * bw + j as usize];

    let mut front = vec![false; bh * bw];
    for i in 0..bh {
        for j in 0..bw {
            if !mask[i * bw + j] {
                continue;
            }
            let near_edge = (-band..=band).any(|di| (-band..=band).any(|dj| outside(i as i64 + di, j as i64 + dj)));
            let (dr, dc) = (i as f64 - cr, j as f64 - cc);
            let norm = (dr * dr + dc * dc).sqrt();
            if near_edge && norm > 0.0 && (dr * fr + dc * fc) / norm >= cos_limit {
                front[i * bw + j] = true;
            }
        }
    }
    // A front pixel must touch the target body.
    for i in 0..bh {
        for j in 0..bw {
            if !front[i * bw + j] {
                continue;
            }
            let touches_body = (-1i64..=1).any(|di| {
                (-1i64..=1).any(|dj| {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    !outside(a, b) && !front[a as usize * bw + b as usize]
                })
            });
            if touches_body {
                label.set(r0 + i, c0 + j, FRONT);
            }
        }
    }
}

/// Most frequent target class predicted inside a placement's footprint,
/// ignoring background and front pixels; ties go to the lowest class id.
pub fn footprint_majority(pred: &LabelImage, target: &TargetSpec) -> Option<u8> {
    let (r0, c0, r1, c1) = target.footprint();
    let mut votes = [0usize; 256];
    for r in r0.max(0) as usize..(r1.max(0) as usize).min(pred.height()) {
        for c in c0.max(0) as usize..(c1.max(0) as usize).min(pred.width()) {
            let k = pred.get(r, c);
            if k != BACKGROUND && k != FRONT {
                votes[k as usize] += 1;
            }
        }
    }
    let best = (0..256).max_by_key(|&k| (votes[k], std::cmp::Reverse(k)))?;
    (votes[best] > 0).then_some(best as u8)
}

/// Renders one target chip of `chip_size × chip_size`.
///
/// `spec.center` is in chip coordinates. The same `(spec, seed)` always
/// yields identical pixels and labels.
pub fn gen_chip(spec: &TargetSpec, chip_size: usize, seed: u64) -> Result<(SarImage, LabelImage)> {
    if chip_size < MIN_CHIP_SIZE {
        return Err(invalid!("chip size {chip_size} below minimum {MIN_CHIP_SIZE}"));
    }
    let scene = SceneSpec {
        height: chip_size,
        width: chip_size,
        placements: vec![Placement { target: *spec, seed }],
        noise_seed: mix_seed(seed, 0xC41F),
    };
    render(&scene)
}

/// Renders a multi-target scene and its ground-truth label image.
pub fn compose_mosaic(scene: &SceneSpec) -> Result<(SarImage, LabelImage)> {
    render(scene)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(invalid!("unknown split {other:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image path relative to the manifest directory.
    pub image: PathBuf,
    pub label: PathBuf,
    pub class_id: u8,
    pub pose: f64,
}

/// Index of one dataset split. Paths are relative to the directory that
/// holds `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub generator_version: String,
    pub split: Split,
    pub seed: u64,
    pub chip_size: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub exclusions: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Options for [`gen_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub num_classes: usize,
    pub num_per_class: usize,
    pub chip_size: usize,
    pub split: Split,
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            num_classes: NUM_TARGET_TYPES,
            num_per_class: 10,
            chip_size: 64,
            split: Split::Train,
            seed: 0,
        }
    }
}

/// Generates `num_per_class` chips per target type into `<root>/<split>/`
/// and writes the manifest next to them.
///
/// Poses cover `[0, 360)` evenly with a random per-class phase; centers
/// jitter by a few pixels around the chip center. Silhouettes too large for
/// the chip are scaled down to fit.
pub fn gen_dataset(opts: &DatasetOptions, root: &Path) -> Result<DatasetManifest> {
    if opts.num_per_class == 0 {
        return Err(invalid!("num_per_class must be >= 1"));
    }
    if opts.num_classes == 0 || opts.num_classes > NUM_TARGET_TYPES {
        return Err(invalid!("number of target classes must be in 1..={NUM_TARGET_TYPES}"));
    }
    if opts.chip_size < MIN_CHIP_SIZE {
        return Err(invalid!("chip size {} below minimum {MIN_CHIP_SIZE}", opts.chip_size));
    }
    let dir = root.join(opts.split.as_str());
    let names = class_names(ClassNaming::Synthetic);
    let mut rng = Prng::new(mix_seed(opts.seed, 0xDA7A));
    let mut entries = Vec::with_capacity(opts.num_classes * opts.num_per_class);
    for k in 0..opts.num_classes {
        let class_id = 2 + k as u8;
        let class_name = &names[class_id as usize - 1];
        let class_dir = dir.join(class_name);
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        let phase = rng.uniform();
        for i in 0..opts.num_per_class {
            let pose = ((i as f64 + phase) * 360.0 / opts.num_per_class as f64) % 360.0;
            let mut spec = TargetSpec::new(class_id, pose, (0.0, 0.0));
            let half = opts.chip_size as f64 / 2.0;
            spec.scale = ((half - 1.5) / (spec.silhouette_radius() - 1.0)).min(1.0);
            let slack = (half - spec.silhouette_radius() - 1.0).clamp(0.0, 6.0);
            spec.center = (
                (half + rng.uniform_range(-slack, slack)).round(),
                (half + rng.uniform_range(-slack, slack)).round(),
            );
            let chip_seed = mix_seed(opts.seed, (k * opts.num_per_class + i) as u64);
            let (img, lbl) = gen_chip(&spec, opts.chip_size, chip_seed)?;
            let id = format!("{}_{class_name}_{i:04}", opts.split.as_str());
            let image = PathBuf::from(class_name).join(format!("{id}_img.pgm"));
            let label = PathBuf::from(class_name).join(format!("{id}_lbl.pgm"));
            pnm::save_image(&img, &dir.join(&image), BitDepth::Sixteen)?;
            pnm::save_label(&lbl, &dir.join(&label))?;
            entries.push(ManifestEntry {
                id,
                image,
                label,
                class_id,
                pose,
            });
        }
    }
    let manifest = DatasetManifest {
        root: dir,
        generator_version: GENERATOR_VERSION.into(),
        split: opts.split,
        seed: opts.seed,
        chip_size: opts.chip_size,
        num_classes: NUM_CLASSES,
        class_names: names,
        entries,
        exclusions: vec![],
    };
    manifest.save()?;
    Ok(manifest)
}

/// Outcome of [`apply_exclusions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExclusionReport {
    pub removed: usize,
    /// Identifiers that matched no entry.
    pub unknown: usize,
}

/// Removes entries whose id is listed and records the ids as exclusions.
pub fn apply_exclusions(manifest: &DatasetManifest, ids: &[String]) -> (DatasetManifest, ExclusionReport) {
    let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let present: HashSet<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    let mut out = manifest.clone();
    out.entries.retain(|e| !wanted.contains(e.id.as_str()));
    let removed = manifest.entries.len() - out.entries.len();
    let unknown = wanted.iter().filter(|id| !present.contains(*id)).count();
    if unknown > 0 {
        log::warn!("{unknown} excluded identifiers matched no manifest entry");
    }
    for id in ids {
        if !out.exclusions.contains(id) {
            out.exclusions.push(id.clone());
        }
    }
    (out, ExclusionReport { removed, unknown })
}

/// Reads an exclusion list: one chip id per line; blank lines and `#` comments ignored.
pub fn read_exclusion_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

impl DatasetManifest {
    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn save(&self) -> Result<()> {
        let path = self.manifest_path();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads `manifest.json` from a directory (or the file itself). Entries
    /// listed in `exclusions` are dropped and every remaining file must exist.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", file.display())))?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        if m.class_names.len() != m.num_classes {
            return Err(Error::Format(format!(
                "{}: {} class names for {} classes",
                file.display(),
                m.class_names.len(),
                m.num_classes
            )));
        }
        let excluded: HashSet<String> = m.exclusions.iter().cloned().collect();
        m.entries.retain(|e| !excluded.contains(&e.id));
        for e in &m.entries {
            for p in [&e.image, &e.label] {
                let full = m.root.join(p);
                if !full.is_file() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, format!("listed by chip {}", e.id)),
                    ));
                }
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.image)
    }

    pub fn label_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.label)
    }

    /// Loads every chip into memory, in manifest order.
    pub fn load_chips(&self) -> Result<Vec<Chip>> {
        self.entries
            .iter()
            .map(|e| {
                let image = pnm::load_image(&self.image_path(e))?;
                let label = pnm::load_label(&self.label_path(e))?;
                if image.height() != label.height() || image.width() != label.width() {
                    return Err(invalid!("chip {}: image and label sizes differ", e.id));
                }
                label.validate(self.num_classes)?;
                Ok(Chip {
                    id: e.id.clone(),
                    class_id: e.class_id,
                    image,
                    label,
                })
            })
            .collect()
    }
}

/// A loaded chip with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub id: String,
    pub class_id: u8,
    pub image: SarImage,
    pub label: LabelImage,
}
