//! The triage service proper: blob storage, the single-writer event log and
//! the in-memory snapshot readers are served from.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, RwLock, RwLockReadGuard};

use base64::Engine;
use chrono::{DateTime, Utc};
use segtriage_core::bundle::{decode_bundle, validate_bytes, LabelMap};
use segtriage_core::metrics::{argmax_segmentation, dice_report, mean_probability};
use segtriage_core::score::score_bundle;
use segtriage_core::stats::{fit_quality_model, regression_table, QualityObservation, StatsError};
use segtriage_core::Bundle;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::events::{Action, Event, EventLog};
use crate::overlay::{render, OverlayKind, Palette};
use crate::state::{QueueItem, State, Status};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const BLOB_DIR: &str = "blobs";
const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Deserialize)]
pub struct DecisionRequest {
    pub action: Action,
    /// Corrected label, base64 of either an 8-bit grayscale PNG or raw
    /// row-major `H*W` class bytes.
    #[serde(default)]
    pub label_base64: Option<String>,
    #[serde(default)]
    pub decided_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelView {
    pub version: u32,
    pub alpha: f64,
    pub fitted_at: DateTime<Utc>,
    pub trained_on: usize,
    pub class_names: Vec<String>,
    pub included_predictors: Vec<String>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub model: segtriage_core::QualityModel,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub accepted: usize,
    pub annotated: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub version: u32,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub included_predictors: Vec<String>,
    pub n_observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub counts: StatusCounts,
    pub model: Option<ModelSummary>,
    pub mean_predicted_dice_pending: Option<f64>,
    pub mean_true_dice_pending: Option<f64>,
    pub labeled_items: usize,
}

pub struct Service {
    data_dir: PathBuf,
    palette: Palette,
    state: RwLock<State>,
    log: Mutex<EventLog>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl Service {
    /// Opens a data directory, replaying its event log.
    pub fn open(data_dir: impl Into<PathBuf>, palette: Palette) -> std::io::Result<Self> {
        let data_dir = data_dir.into();
        fs::create_dir_all(data_dir.join(BLOB_DIR))?;
        let (log, events) = EventLog::open(&data_dir.join(EVENTS_FILE))?;
        Ok(Service {
            data_dir,
            palette,
            state: RwLock::new(State::replay(&events)),
            log: Mutex::new(log),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn writer(&self) -> MutexGuard<'_, EventLog> {
        self.log.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends an event and folds it into the snapshot. Callers hold the
    /// writer lock.
    fn commit(&self, log: &mut EventLog, event: Event) -> Result<(), ApiError> {
        log.append(&event)?;
        self.state.write().unwrap_or_else(|e| e.into_inner()).apply(&event);
        Ok(())
    }

    fn blob_path(&self, sha: &str, ext: &str) -> PathBuf {
        self.data_dir.join(BLOB_DIR).join(format!("{sha}.{ext}"))
    }

    fn store_blob(&self, bytes: &[u8], ext: &str) -> Result<String, ApiError> {
        let sha = sha256_hex(bytes);
        let path = self.blob_path(&sha, ext);
        if !path.exists() {
            let tmp = path.with_extension(format!("{ext}.tmp"));
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(sha)
    }

    fn load_bundle(&self, item: &QueueItem) -> Result<Bundle, ApiError> {
        let bytes = fs::read(self.blob_path(&item.blob, "ubnd"))?;
        decode_bundle(&bytes).map_err(|e| ApiError::internal(format!("stored blob for {} unreadable: {e}", item.item_id)))
    }

    /// Copy of the whole in-memory state.
    pub fn snapshot(&self) -> State {
        self.read().clone()
    }

    pub fn ingest(&self, bytes: &[u8]) -> Result<QueueItem, ApiError> {
        let bundle = decode_bundle(bytes).map_err(|e| {
            ApiError::unprocessable("invalid_bundle", e.to_string()).with_details(validate_bytes(bytes))
        })?;
        let record = score_bundle(&bundle).map_err(|e| ApiError::unprocessable("invalid_bundle", e.to_string()))?;

        let mut log = self.writer();
        let item_id = {
            let state = self.read();
            if let Some(existing) = state.find_image(&bundle.image_id) {
                return Err(ApiError::conflict(
                    "duplicate_image",
                    format!("image {} already ingested", bundle.image_id),
                )
                .with_details(serde_json::json!({ "item_id": existing.item_id })));
            }
            if let Some(spec) = &state.class_spec {
                if spec != &bundle.class_spec {
                    return Err(ApiError::unprocessable(
                        "class_spec_mismatch",
                        "bundle classes differ from the classes of this queue",
                    )
                    .with_details(serde_json::json!({
                        "expected": spec.class_names(),
                        "found": bundle.class_spec.class_names(),
                    })));
                }
            }
            format!("item-{:06}", state.items.len() + 1)
        };
        let blob = self.store_blob(bytes, "ubnd")?;
        self.commit(
            &mut log,
            Event::Ingested {
                item_id: item_id.clone(),
                image_id: bundle.image_id.clone(),
                blob,
                class_names: bundle.class_spec.class_names().to_vec(),
                background_index: bundle.class_spec.background_index(),
                height: bundle.height(),
                width: bundle.width(),
                record,
                at: Utc::now(),
            },
        )?;
        drop(log);
        self.item(&item_id)
    }

    pub fn queue(&self, limit: Option<usize>) -> Vec<QueueItem> {
        let state = self.read();
        let queue = state.queue();
        queue.into_iter().take(limit.unwrap_or(usize::MAX)).cloned().collect()
    }

    pub fn item(&self, item_id: &str) -> Result<QueueItem, ApiError> {
        self.read()
            .items
            .get(item_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_item", format!("no item {item_id}")))
    }

    fn parse_label(&self, item: &QueueItem, encoded: &str) -> Result<LabelMap, ApiError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(encoded.trim())
            .map_err(|e| ApiError::bad_request("bad_label_encoding", format!("label_base64: {e}")))?;
        let (h, w) = (item.height, item.width);
        let (lh, lw, values) = if bytes.starts_with(PNG_SIGNATURE) {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| ApiError::unprocessable("bad_label", format!("label png: {e}")))?;
            let image::DynamicImage::ImageLuma8(gray) = img else {
                return Err(ApiError::unprocessable("bad_label", "label png must be 8-bit grayscale"));
            };
            (gray.height() as usize, gray.width() as usize, gray.into_raw())
        } else if bytes.len() == h * w {
            (h, w, bytes)
        } else {
            return Err(ApiError::unprocessable(
                "label_dimension_mismatch",
                format!("raw label has {} bytes, image is {h}x{w}", bytes.len()),
            ));
        };
        if (lh, lw) != (h, w) {
            return Err(ApiError::unprocessable(
                "label_dimension_mismatch",
                format!("label is {lh}x{lw}, image is {h}x{w}"),
            ));
        }
        LabelMap::new(h, w, values).map_err(|e| ApiError::unprocessable("bad_label", e.to_string()))
    }

    pub fn decide(&self, item_id: &str, request: DecisionRequest) -> Result<QueueItem, ApiError> {
        let mut log = self.writer();
        let item = self.item(item_id)?;
        if item.status != Status::Pending {
            return Err(ApiError::conflict(
                "not_pending",
                format!("item {item_id} is already {:?}", item.status).to_lowercase(),
            ));
        }
        let (label_blob, dice) = match (&request.label_base64, request.action) {
            (None, _) => (None, None),
            (Some(_), Action::Accept) => {
                return Err(ApiError::bad_request(
                    "label_not_allowed",
                    "a corrected label can only accompany an annotate decision",
                ))
            }
            (Some(encoded), Action::Annotate) => {
                let label = self.parse_label(&item, encoded)?;
                let bundle = self.load_bundle(&item)?;
                let seg = argmax_segmentation(&mean_probability(&bundle.probabilities));
                let dice = dice_report(&seg, &label, &bundle.class_spec)
                    .map_err(|e| ApiError::unprocessable("bad_label", e.to_string()))?;
                (Some(self.store_blob(label.values(), "label")?), Some(dice))
            }
        };
        self.commit(
            &mut log,
            Event::Decided {
                item_id: item_id.to_string(),
                action: request.action,
                label_blob,
                dice,
                decided_by: request.decided_by,
                at: Utc::now(),
            },
        )?;
        drop(log);
        self.item(item_id)
    }

    /// Fits on every item with ground truth and rescores the pending ones.
    pub fn fit_model(&self, alpha: f64) -> Result<ModelView, ApiError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ApiError::bad_request("invalid_alpha", format!("alpha {alpha} not in (0, 1)")));
        }
        let mut log = self.writer();
        let (spec, observations, trained_on, version) = {
            let state = self.read();
            let Some(spec) = state.class_spec.clone() else {
                return Err(ApiError::unprocessable("insufficient_labels", "no items ingested"));
            };
            let labeled = state.labeled();
            let required = spec.num_classes() + 2;
            if labeled.len() < required {
                return Err(ApiError::unprocessable(
                    "insufficient_labels",
                    format!("{} labeled items, at least {required} needed", labeled.len()),
                )
                .with_details(serde_json::json!({ "labeled": labeled.len(), "required": required })));
            }
            let observations: Vec<QualityObservation> = labeled
                .iter()
                .map(|i| QualityObservation {
                    uncertainty: i.class_uncertainties.clone(),
                    mean_dice: i.true_mean_dice.expect("labeled items carry Dice"),
                })
                .collect();
            let trained_on = labeled.iter().map(|i| i.item_id.clone()).collect::<Vec<_>>();
            let version = state.model.as_ref().map_or(1, |m| m.version + 1);
            (spec, observations, trained_on, version)
        };
        let model = fit_quality_model(&observations, &spec, alpha).map_err(|e| match e {
            StatsError::InvalidAlpha(..) => ApiError::bad_request("invalid_alpha", e.to_string()),
            _ => ApiError::unprocessable("fit_failed", e.to_string()),
        })?;
        self.commit(
            &mut log,
            Event::ModelFitted {
                version,
                alpha,
                trained_on,
                model,
                at: Utc::now(),
            },
        )?;
        drop(log);
        self.model()
    }

    pub fn model(&self) -> Result<ModelView, ApiError> {
        let state = self.read();
        let fitted = state
            .model
            .as_ref()
            .ok_or_else(|| ApiError::not_found("no_model", "no model has been fitted"))?;
        let m = &fitted.model;
        Ok(ModelView {
            version: fitted.version,
            alpha: fitted.alpha,
            fitted_at: fitted.fitted_at,
            trained_on: fitted.trained_on.len(),
            class_names: m.class_names.clone(),
            included_predictors: m.included_predictors.iter().map(|&c| m.class_names[c].clone()).collect(),
            r_squared: m.r_squared,
            adj_r_squared: m.adj_r_squared,
            model: m.clone(),
            table: regression_table(m),
        })
    }

    pub fn metrics(&self) -> Metrics {
        let state = self.read();
        let count = |s: Status| state.items.values().filter(|i| i.status == s).count();
        let pending: Vec<&QueueItem> = state.items.values().filter(|i| i.status == Status::Pending).collect();
        Metrics {
            counts: StatusCounts {
                pending: pending.len(),
                accepted: count(Status::Accepted),
                annotated: count(Status::Annotated),
                total: state.items.len(),
            },
            model: state.model.as_ref().map(|f| ModelSummary {
                version: f.version,
                r_squared: f.model.r_squared,
                adj_r_squared: f.model.adj_r_squared,
                included_predictors: f
                    .model
                    .included_predictors
                    .iter()
                    .map(|&c| f.model.class_names[c].clone())
                    .collect(),
                n_observations: f.model.n_observations,
            }),
            mean_predicted_dice_pending: mean(pending.iter().filter_map(|i| i.predicted_mean_dice)),
            mean_true_dice_pending: mean(pending.iter().filter_map(|i| i.true_mean_dice)),
            labeled_items: state.labeled().len(),
        }
    }

    pub fn overlay(&self, item_id: &str, kind: OverlayKind) -> Result<Vec<u8>, ApiError> {
        let item = self.item(item_id)?;
        let bundle = self.load_bundle(&item)?;
        Ok(render(&bundle, kind, &self.palette))
    }
}
