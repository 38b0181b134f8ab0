//! Per-image score records and the score-file interchange between batch
//! stages.
//!
//! A score file is either JSON (`ScoreFile`) or CSV. CSV columns are
//! `image_id, mean_entropy, u_0..u_{C-1}, s_0..s_{C-1}, dice_0..dice_{C-1},
//! mean_dice, pixel_accuracy`; absent uncertainties and missing Dice values
//! are empty cells. A CSV is accompanied by a `<stem>.meta.json` sidecar
//! carrying the schema version and class list.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{Bundle, BundleError, ClassSpec};
use crate::metrics::{argmax_segmentation, dice_report, mean_probability, DiceReport, MetricsError};
use crate::stats::{CorrelationSample, QualityObservation};
use crate::uncertainty::{class_uncertainties, entropy_map, image_mean_entropy, ClassUncertaintyVector};

pub const SCORE_SCHEMA: &str = "segtriage-scores";
pub const SCORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("score file: {0}")]
    Format(String),
    #[error("bundle {image_id} has classes {found:?}, corpus uses {expected:?}")]
    ClassMismatch {
        image_id: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
}

/// Everything the statistical stages need about one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub mean_entropy: f64,
    pub uncertainty: ClassUncertaintyVector,
    /// `None` when the bundle carries no label.
    pub dice: Option<DiceReport>,
}

impl ScoreRecord {
    pub fn mean_dice(&self) -> Option<f64> {
        self.dice.as_ref().map(|d| d.mean_dice)
    }

    pub fn quality_observation(&self) -> Option<QualityObservation> {
        self.dice.as_ref().map(|d| QualityObservation {
            uncertainty: self.uncertainty.clone(),
            mean_dice: d.mean_dice,
        })
    }

    pub fn correlation_sample(&self) -> Option<CorrelationSample> {
        self.dice.as_ref().map(|d| CorrelationSample {
            uncertainty: self.uncertainty.clone(),
            dice: d.clone(),
            mean_entropy: self.mean_entropy,
        })
    }
}

/// Runs the full per-image pipeline: mean softmax, argmax, entropy, class
/// uncertainties and (with a label) Dice.
pub fn score_bundle(bundle: &Bundle) -> Result<ScoreRecord, ScoreError> {
    let mean = mean_probability(&bundle.probabilities);
    let seg = argmax_segmentation(&mean);
    let umap = entropy_map(&mean);
    let uncertainty = class_uncertainties(&umap, &seg, &bundle.class_spec)?;
    let dice = bundle
        .label
        .as_ref()
        .map(|label| dice_report(&seg, label, &bundle.class_spec))
        .transpose()?;
    Ok(ScoreRecord {
        image_id: bundle.image_id.clone(),
        mean_entropy: image_mean_entropy(&umap),
        uncertainty,
        dice,
    })
}

/// A scored corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub schema: String,
    pub version: u32,
    pub class_names: Vec<String>,
    pub background_index: usize,
    pub records: Vec<ScoreRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    schema: String,
    version: u32,
    class_names: Vec<String>,
    background_index: usize,
    records: usize,
}

impl ScoreFile {
    pub fn new(spec: &ClassSpec, records: Vec<ScoreRecord>) -> Self {
        ScoreFile {
            schema: SCORE_SCHEMA.to_string(),
            version: SCORE_SCHEMA_VERSION,
            class_names: spec.class_names().to_vec(),
            background_index: spec.background_index(),
            records,
        }
    }

    pub fn class_spec(&self) -> Result<ClassSpec, ScoreError> {
        ClassSpec::new(self.class_names.clone(), self.background_index).map_err(ScoreError::from)
    }

    pub fn quality_observations(&self) -> Vec<QualityObservation> {
        self.records.iter().filter_map(ScoreRecord::quality_observation).collect()
    }

    pub fn correlation_samples(&self) -> Vec<CorrelationSample> {
        self.records.iter().filter_map(ScoreRecord::correlation_sample).collect()
    }

    fn check(&self) -> Result<(), ScoreError> {
        if self.schema != SCORE_SCHEMA || self.version != SCORE_SCHEMA_VERSION {
            return Err(ScoreError::Format(format!(
                "unsupported schema {} v{}",
                self.schema, self.version
            )));
        }
        let c = self.class_names.len();
        for r in &self.records {
            let dice_ok = r.dice.as_ref().is_none_or(|d| d.per_class.len() == c);
            if r.uncertainty.u.len() != c || r.uncertainty.pixel_counts.len() != c || !dice_ok {
                return Err(ScoreError::Format(format!("record {} has wrong class count", r.image_id)));
            }
        }
        self.class_spec()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScoreError> {
        let file: ScoreFile = serde_json::from_str(text)?;
        file.check()?;
        Ok(file)
    }

    pub fn csv_header(classes: usize) -> Vec<String> {
        let mut header = vec!["image_id".to_string(), "mean_entropy".to_string()];
        for prefix in ["u", "s", "dice"] {
            header.extend((0..classes).map(|c| format!("{prefix}_{c}")));
        }
        header.push("mean_dice".into());
        header.push("pixel_accuracy".into());
        header
    }

    pub fn to_csv(&self) -> Result<String, ScoreError> {
        let c = self.class_names.len();
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(Self::csv_header(c))?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.records {
            let mut row = vec![r.image_id.clone(), r.mean_entropy.to_string()];
            row.extend(r.uncertainty.u.iter().map(|&u| opt(u)));
            row.extend(r.uncertainty.pixel_counts.iter().map(usize::to_string));
            match &r.dice {
                Some(d) => {
                    row.extend(d.per_class.iter().map(f64::to_string));
                    row.push(d.mean_dice.to_string());
                    row.push(d.pixel_accuracy.to_string());
                }
                None => row.extend(std::iter::repeat_n(String::new(), c + 2)),
            }
            writer.write_record(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| ScoreError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Parses CSV rows; class names come from `spec`.
    pub fn from_csv(text: &str, spec: &ClassSpec) -> Result<Self, ScoreError> {
        let c = spec.num_classes();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != Self::csv_header(c) {
            return Err(ScoreError::Format(format!(
                "csv header does not match {c} classes: {header:?}"
            )));
        }
        let mut records = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let cell = |i: usize| row.get(i).unwrap_or("");
            let num = |i: usize| -> Result<Option<f64>, ScoreError> {
                let s = cell(i);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| ScoreError::Format(format!("row {}: bad number {s:?}", line + 1)))
                }
            };
            let required = |i: usize| {
                num(i)?.ok_or_else(|| ScoreError::Format(format!("row {}: empty column {}", line + 1, header[i])))
            };
            let u = (0..c).map(|k| num(2 + k)).collect::<Result<Vec<_>, _>>()?;
            let pixel_counts = (0..c)
                .map(|k| {
                    cell(2 + c + k)
                        .parse()
                        .map_err(|_| ScoreError::Format(format!("row {}: bad pixel count", line + 1)))
                })
                .collect::<Result<Vec<usize>, _>>()?;
            let dice = if cell(2 + 3 * c).is_empty() {
                None
            } else {
                Some(DiceReport {
                    per_class: (0..c).map(|k| required(2 + 2 * c + k)).collect::<Result<_, _>>()?,
                    mean_dice: required(2 + 3 * c)?,
                    pixel_accuracy: required(3 + 3 * c)?,
                })
            };
            records.push(ScoreRecord {
                image_id: cell(0).to_string(),
                mean_entropy: required(1)?,
                uncertainty: ClassUncertaintyVector { u, pixel_counts },
                dice,
            });
        }
        let file = ScoreFile::new(spec, records);
        file.check()?;
        Ok(file)
    }

    /// Sidecar path for a CSV score file: `scores.csv` → `scores.meta.json`.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.json")
    }

    /// Writes JSON, or CSV plus sidecar.
    pub fn save(&self, path: &Path, format: ScoreFormat) -> Result<(), ScoreError> {
        match format {
            ScoreFormat::Csv => {
                fs::write(path, self.to_csv()?)?;
                let sidecar = Sidecar {
                    schema: self.schema.clone(),
                    version: self.version,
                    class_names: self.class_names.clone(),
                    background_index: self.background_index,
                    records: self.records.len(),
                };
                fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
            }
            ScoreFormat::Json => fs::write(path, self.to_json() + "\n")?,
        }
        Ok(())
    }

    /// Reads a score file, telling JSON from CSV by its first non-blank byte.
    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            return Self::from_json(&text);
        }
        let sidecar_path = Self::sidecar_path(path);
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path).map_err(|e| {
            ScoreError::Format(format!("missing sidecar {}: {e}", sidecar_path.display()))
        })?)?;
        if sidecar.schema != SCORE_SCHEMA || sidecar.version != SCORE_SCHEMA_VERSION {
            return Err(ScoreError::Format(format!(
                "unsupported schema {} v{}",
                sidecar.schema, sidecar.version
            )));
        }
        let spec = ClassSpec::new(sidecar.class_names, sidecar.background_index)?;
        let file = Self::from_csv(&text, &spec)?;
        if file.records.len() != sidecar.records {
            return Err(ScoreError::Format(format!(
                "sidecar lists {} records, csv has {}",
                sidecar.records,
                file.records.len()
            )));
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFormat {
    Csv,
    Json,
}

impl ScoreFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            ScoreFormat::Json
        } else {
            ScoreFormat::Csv
        }
    }
}
