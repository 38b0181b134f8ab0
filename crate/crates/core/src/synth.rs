//! Synthetic corpora with a tunable coupling between segmentation error and
//! predictive uncertainty.
//!
//! Each image draws a target mean Dice `q`, builds a label map from the
//! layout, and mispredicts a fraction of pixels chosen so that the expected
//! mean Dice equals `q`. Every pixel gets an uncertainty level
//! `λ = coupling·error + (1 − coupling)·ξ + b_c + noise`, where `ξ` flags
//! pixels that are uncertain for reasons unrelated to error and `b_c` is a
//! per-image calibration offset of the predicted class. `λ = 0` emits a
//! near-one-hot softmax, `λ = 1` a near-uniform one that still argmaxes to
//! the predicted class. The `T` passes scatter around that mean and average
//! back to it exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{encode_bundle, Bundle, BundleError, ClassSpec, LabelMap, ProbabilityStack};

/// Upper end of the true-class probability at certain pixels.
const CERTAIN_HIGH: f64 = 0.999;
/// Lower end of the certain range; reached only at `noise_scale >= 0.1`.
const CERTAIN_LOW: f64 = 0.9;
/// Margin of the predicted class over `1/C` at maximally uncertain pixels.
const UNCERTAIN_MARGIN: f64 = 0.05;
/// Upper bound of the per-image rate of error-independent uncertain pixels.
const MAX_SPURIOUS_RATE: f64 = 0.5;
/// Spread of the per-image, per-class calibration offset, in units of
/// `noise_scale`.
const CLASS_OFFSET_SCALE: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Vertical bands: background on even bands, foreground classes cycling
    /// on odd ones.
    Stripes,
    /// Background with random discs of each foreground class.
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_images: usize,
    pub passes: usize,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub layout: Layout,
    pub quality_range: (f64, f64),
    /// 1: uncertainty exactly tracks error; 0: independent of it.
    pub coupling: f64,
    pub noise_scale: f64,
    pub seed: u64,
    /// Background-predicted pixels never take the error term, so the
    /// background uncertainty carries no quality signal.
    pub background_decoupled: bool,
    pub with_source_image: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_images: 100,
            passes: 5,
            classes: 4,
            height: 64,
            width: 64,
            layout: Layout::Stripes,
            quality_range: (0.3, 0.95),
            coupling: 0.9,
            noise_scale: 0.05,
            seed: 0,
            background_decoupled: true,
            with_source_image: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Config(m));
        let (lo, hi) = self.quality_range;
        if self.passes == 0 || self.height == 0 || self.width == 0 {
            return fail("dimensions must be positive".into());
        }
        if self.classes < 2 || self.classes > crate::bundle::MAX_CLASSES {
            return fail(format!("classes must be in 2..=255, got {}", self.classes));
        }
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return fail(format!("quality range [{lo}, {hi}] is not an ordered subset of [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return fail(format!("coupling {} not in [0, 1]", self.coupling));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return fail(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        Ok(())
    }

    pub fn class_spec(&self) -> ClassSpec {
        ClassSpec::generic(self.classes).expect("validated class count")
    }
}

/// One generated bundle plus the generator's targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage {
    pub bundle: Bundle,
    pub target_quality: f64,
    pub corruption_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub file: String,
    pub target_quality: f64,
    pub corruption_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GeneratorConfig,
    pub images: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn image_id(index: usize) -> String {
    format!("synth-{index:05}")
}

fn stripes(config: &GeneratorConfig, spec: &ClassSpec) -> Vec<u8> {
    let fg = foreground_classes(spec);
    let band = (config.width / (2 * fg.len())).max(1);
    let bg = spec.background_index() as u8;
    (0..config.height)
        .flat_map(|_| 0..config.width)
        .map(|x| {
            let b = x / band;
            if b.is_multiple_of(2) {
                bg
            } else {
                fg[(b / 2) % fg.len()]
            }
        })
        .collect()
}

fn blobs(config: &GeneratorConfig, spec: &ClassSpec, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (h, w) = (config.height, config.width);
    let mut label = vec![spec.background_index() as u8; h * w];
    let short = h.min(w) as f64;
    let (r_lo, r_hi) = ((short / 12.0).max(1.0), (short / 5.0).max(1.5));
    for &class in &foreground_classes(spec) {
        for _ in 0..rng.random_range(1..=3) {
            let cy = rng.random_range(0..h) as f64;
            let cx = rng.random_range(0..w) as f64;
            let r = rng.random_range(r_lo..r_hi);
            for y in 0..h {
                for x in 0..w {
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    if dy * dy + dx * dx <= r * r {
                        label[y * w + x] = class;
                    }
                }
            }
            label[cy as usize * w + cx as usize] = class;
        }
    }
    label
}

fn foreground_classes(spec: &ClassSpec) -> Vec<u8> {
    (0..spec.num_classes())
        .filter(|&c| c != spec.background_index())
        .map(|c| c as u8)
        .collect()
}

/// Expected mean Dice when a fraction `f` of pixels is relabelled to a
/// uniformly random other class.
pub fn expected_mean_dice(label_counts: &[usize], f: f64) -> f64 {
    let c = label_counts.len();
    let n: usize = label_counts.iter().sum();
    let total: f64 = label_counts
        .iter()
        .map(|&l| {
            let l = l as f64;
            let tp = (1.0 - f) * l;
            let fp = f * (n as f64 - l) / (c - 1) as f64;
            let denom = tp + fp + l;
            if denom == 0.0 {
                1.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    total / c as f64
}

/// Corruption fraction whose expected mean Dice is `target`, by bisection.
pub fn calibrate_corruption(label_counts: &[usize], target: f64) -> f64 {
    if expected_mean_dice(label_counts, 0.0) <= target {
        return 0.0;
    }
    if expected_mean_dice(label_counts, 1.0) >= target {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_mean_dice(label_counts, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mean class distribution for a pixel predicted as `class` at uncertainty `lambda`.
fn emission(classes: usize, class: usize, lambda: f64, confidence: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let floor = 1.0 / classes as f64 + UNCERTAIN_MARGIN.min(0.5 / classes as f64);
    let top = confidence - lambda * (confidence - floor);
    let rest = 1.0 - top;
    let mut weights: Vec<f64> = (0..classes - 1).map(|_| 1.0 + 0.2 * (rng.random::<f64>() - 0.5)).collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= rest / wsum);
    if weights.iter().any(|&w| w >= top - 1e-3) {
        weights.iter_mut().for_each(|w| *w = rest / (classes - 1) as f64);
    }
    let mut p = Vec::with_capacity(classes);
    let mut others = weights.into_iter();
    for c in 0..classes {
        p.push(if c == class { top } else { others.next().unwrap() });
    }
    p
}

/// `passes` distributions on the simplex whose mean is `mean`.
fn scatter_passes(mean: &[f64], passes: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if passes == 1 || spread == 0.0 {
        return vec![mean.to_vec(); passes];
    }
    let raw: Vec<Vec<f64>> = (0..passes)
        .map(|_| {
            let q: Vec<f64> = mean
                .iter()
                .map(|&p| p * (spread * rng.sample::<f64, _>(StandardNormal)).exp())
                .collect();
            let s: f64 = q.iter().sum();
            q.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let classes = mean.len();
    let centre: Vec<f64> = (0..classes)
        .map(|c| raw.iter().map(|q| q[c]).sum::<f64>() / passes as f64)
        .collect();
    let deltas: Vec<Vec<f64>> = raw
        .iter()
        .map(|q| q.iter().zip(&centre).map(|(a, b)| a - b).collect())
        .collect();
    // Shrink the deviations until every pass stays non-negative.
    let mut gamma: f64 = 1.0;
    for d in &deltas {
        for (c, &dc) in d.iter().enumerate() {
            if dc < 0.0 {
                gamma = gamma.min(0.999 * mean[c] / -dc);
            }
        }
    }
    deltas
        .iter()
        .map(|d| mean.iter().zip(d).map(|(m, dc)| (m + gamma * dc).clamp(0.0, 1.0)).collect())
        .collect()
}

fn source_image(label: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    const PALETTE: [[u8; 3]; 6] = [
        [60, 60, 60],
        [200, 60, 50],
        [60, 180, 70],
        [60, 90, 200],
        [200, 190, 60],
        [170, 70, 190],
    ];
    label
        .iter()
        .flat_map(|&c| {
            let base = PALETTE[c as usize % PALETTE.len()];
            let jitter: i16 = rng.random_range(-20..=20);
            base.map(|v| (v as i16 + jitter).clamp(0, 255) as u8)
        })
        .collect()
}

/// Generates image `index` of the corpus; depends only on `(config, index)`.
pub fn generate_image(config: &GeneratorConfig, index: usize) -> Result<GeneratedImage, SynthError> {
    config.validate()?;
    let spec = config.class_spec();
    let classes = config.classes;
    let n = config.height * config.width;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let (lo, hi) = config.quality_range;
    let target = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let label = match config.layout {
        Layout::Stripes => stripes(config, &spec),
        Layout::Blobs => blobs(config, &spec, &mut rng),
    };
    let mut counts = vec![0usize; classes];
    label.iter().for_each(|&c| counts[c as usize] += 1);
    let fraction = calibrate_corruption(&counts, target);

    let mut pred = label.clone();
    let mut wrong = vec![false; n];
    let corrupted = (fraction * n as f64).round() as usize;
    for i in sample(&mut rng, n, corrupted.min(n)) {
        let shift = rng.random_range(1..classes);
        pred[i] = ((label[i] as usize + shift) % classes) as u8;
        wrong[i] = true;
    }

    let spurious_rate = rng.random_range(0.0..MAX_SPURIOUS_RATE);
    let background_rate = rng.random_range(0.0..MAX_SPURIOUS_RATE);
    let confidence_spread = (CERTAIN_HIGH - CERTAIN_LOW) * (config.noise_scale * 10.0).min(1.0);
    let bg = spec.background_index() as u8;
    let class_offset: Vec<f64> = (0..classes)
        .map(|_| CLASS_OFFSET_SCALE * config.noise_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut values = vec![0f32; config.passes * classes * n];
    for i in 0..n {
        let decoupled = config.background_decoupled && pred[i] == bg;
        let rate = if decoupled { background_rate } else { spurious_rate };
        let spurious = if rng.random::<f64>() < rate { 1.0 } else { 0.0 };
        let error = if wrong[i] && !decoupled { 1.0 } else { 0.0 };
        let mut lambda = config.coupling * error + (1.0 - config.coupling) * spurious;
        if !decoupled {
            lambda += class_offset[pred[i] as usize];
        }
        if config.noise_scale > 0.0 {
            lambda += config.noise_scale * rng.sample::<f64, _>(StandardNormal);
        }
        let lambda = lambda.clamp(0.0, 1.0);
        let confidence = CERTAIN_HIGH - confidence_spread * rng.random::<f64>();
        let mean = emission(classes, pred[i] as usize, lambda, confidence, &mut rng);
        let spread = 0.3 * lambda + config.noise_scale;
        for (t, p) in scatter_passes(&mean, config.passes, spread, &mut rng).iter().enumerate() {
            for (c, &v) in p.iter().enumerate() {
                values[(t * classes + c) * n + i] = v as f32;
            }
        }
    }

    let source = config.with_source_image.then(|| source_image(&label, &mut rng));
    let mut meta = BTreeMap::new();
    meta.insert("generator".to_string(), "segtriage-synth".to_string());
    meta.insert("target_quality".to_string(), target.to_string());
    meta.insert("corruption_fraction".to_string(), fraction.to_string());

    let bundle = Bundle {
        image_id: image_id(index),
        class_spec: spec,
        probabilities: ProbabilityStack::new(config.passes, classes, config.height, config.width, values)?,
        label: Some(LabelMap::new(config.height, config.width, label)?),
        source_image: source,
        meta,
    };
    Ok(GeneratedImage {
        bundle,
        target_quality: target,
        corruption_fraction: fraction,
    })
}

pub fn generate_corpus(config: &GeneratorConfig) -> Result<Vec<GeneratedImage>, SynthError> {
    config.validate()?;
    (0..config.num_images).map(|i| generate_image(config, i)).collect()
}

/// Writes `<image_id>.ubnd` files and `manifest.json` into `dir`.
pub fn write_corpus(dir: &Path, config: &GeneratorConfig, images: &[GeneratedImage]) -> Result<Manifest, SynthError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(images.len());
    for image in images {
        let file = format!("{}.ubnd", image.bundle.image_id);
        fs::write(dir.join(&file), encode_bundle(&image.bundle)?)?;
        entries.push(ManifestEntry {
            image_id: image.bundle.image_id.clone(),
            file,
            target_quality: image.target_quality,
            corruption_fraction: image.corruption_fraction,
        });
    }
    let manifest = Manifest {
        config: config.clone(),
        images: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Sorted `.ubnd` files in a directory.
pub fn bundle_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ubnd"))
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{argmax_segmentation, dice_report, mean_probability};
    use crate::uncertainty::entropy_map;

    fn small(layout: Layout) -> GeneratorConfig {
        GeneratorConfig {
            num_images: 6,
            height: 24,
            width: 24,
            layout,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let bad = GeneratorConfig {
            quality_range: (0.8, 0.2),
            ..GeneratorConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeneratorConfig {
            classes: 1,
            ..GeneratorConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeneratorConfig {
            coupling: 1.5,
            ..GeneratorConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(GeneratorConfig::default().validate().is_ok());
    }

    #[test]
    fn calibration_inverts_expected_dice() {
        let counts = [2048, 683, 683, 682];
        for target in [0.2, 0.5, 0.8, 0.99] {
            let f = calibrate_corruption(&counts, target);
            assert!((expected_mean_dice(&counts, f) - target).abs() < 1e-9);
        }
        assert_eq!(calibrate_corruption(&counts, 1.0), 0.0);
        // Equal areas: mean Dice is exactly 1 - f.
        assert!((expected_mean_dice(&[10, 10, 10, 10], 0.3) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn stripes_have_exact_frequencies() {
        let config = GeneratorConfig {
            width: 12,
            height: 2,
            ..GeneratorConfig::default()
        };
        let label = stripes(&config, &config.class_spec());
        assert_eq!(&label[..12], &[0, 0, 1, 1, 0, 0, 2, 2, 0, 0, 3, 3]);
    }

    #[test]
    fn emitted_stacks_are_valid_and_argmax_as_intended() {
        for layout in [Layout::Stripes, Layout::Blobs] {
            let config = small(layout);
            for i in 0..config.num_images {
                let img = generate_image(&config, i).unwrap();
                assert!(img.bundle.validate().is_valid());
                assert!(img.bundle.source_image.is_some());
            }
        }
    }

    #[test]
    fn perfect_case_is_certain_and_exact() {
        let config = GeneratorConfig {
            quality_range: (1.0, 1.0),
            coupling: 1.0,
            noise_scale: 0.0,
            ..small(Layout::Blobs)
        };
        let img = generate_image(&config, 2).unwrap();
        let mean = mean_probability(&img.bundle.probabilities);
        let seg = argmax_segmentation(&mean);
        assert_eq!(&seg.values, img.bundle.label.as_ref().unwrap().values());
        let h = entropy_map(&mean);
        assert!(h.values.iter().all(|&v| v < 0.01));
        let d = dice_report(&seg, img.bundle.label.as_ref().unwrap(), &img.bundle.class_spec).unwrap();
        assert_eq!(d.mean_dice, 1.0);
    }

    #[test]
    fn deterministic_per_index() {
        let config = small(Layout::Blobs);
        assert_eq!(generate_image(&config, 3).unwrap(), generate_image(&config, 3).unwrap());
        assert_ne!(
            generate_image(&config, 3).unwrap().bundle.probabilities,
            generate_image(&config, 4).unwrap().bundle.probabilities
        );
    }
}
