//! In-memory queue state, rebuilt as a fold over the event log.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use segtriage_core::bundle::ClassSpec;
use segtriage_core::metrics::DiceReport;
use segtriage_core::uncertainty::ClassUncertaintyVector;
use segtriage_core::QualityModel;
use serde::{Deserialize, Serialize};

use crate::events::{Action, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Accepted,
    Annotated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Bundle,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub item_id: String,
    pub seq: u64,
    pub image_id: String,
    pub status: Status,
    pub height: usize,
    pub width: usize,
    /// `None` until a model has been fitted.
    pub predicted_mean_dice: Option<f64>,
    pub class_uncertainties: ClassUncertaintyVector,
    pub mean_entropy: f64,
    /// Upper end of the entropy scale, `ln C`.
    pub max_entropy: f64,
    pub true_mean_dice: Option<f64>,
    pub dice: Option<DiceReport>,
    pub label_source: Option<LabelSource>,
    pub blob: String,
    pub label_blob: Option<String>,
    pub decided_by: Option<String>,
    pub decided_at: Option<DateTime<Utc>>,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: u32,
    pub alpha: f64,
    pub trained_on: Vec<String>,
    pub fitted_at: DateTime<Utc>,
    pub model: QualityModel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub class_spec: Option<ClassSpec>,
    pub items: BTreeMap<String, QueueItem>,
    pub model: Option<FittedModel>,
    pub events: u64,
}

impl State {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut state = State::default();
        for e in events {
            state.apply(e);
        }
        state
    }

    pub fn apply(&mut self, event: &Event) {
        self.events += 1;
        match event {
            Event::Ingested {
                item_id,
                image_id,
                blob,
                class_names,
                background_index,
                height,
                width,
                record,
                at,
            } => {
                if self.class_spec.is_none() {
                    self.class_spec = ClassSpec::new(class_names.clone(), *background_index).ok();
                }
                let predicted = self.model.as_ref().map(|m| m.model.predict(&record.uncertainty));
                let item = QueueItem {
                    item_id: item_id.clone(),
                    seq: self.events,
                    image_id: image_id.clone(),
                    status: Status::Pending,
                    height: *height,
                    width: *width,
                    predicted_mean_dice: predicted,
                    class_uncertainties: record.uncertainty.clone(),
                    mean_entropy: record.mean_entropy,
                    max_entropy: (class_names.len() as f64).ln(),
                    true_mean_dice: record.mean_dice(),
                    dice: record.dice.clone(),
                    label_source: record.dice.as_ref().map(|_| LabelSource::Bundle),
                    blob: blob.clone(),
                    label_blob: None,
                    decided_by: None,
                    decided_at: None,
                    ingested_at: *at,
                };
                self.items.insert(item_id.clone(), item);
            }
            Event::Decided {
                item_id,
                action,
                label_blob,
                dice,
                decided_by,
                at,
            } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    item.status = match action {
                        Action::Accept => Status::Accepted,
                        Action::Annotate => Status::Annotated,
                    };
                    if let Some(d) = dice {
                        item.true_mean_dice = Some(d.mean_dice);
                        item.dice = Some(d.clone());
                        item.label_source = Some(LabelSource::Annotation);
                        item.label_blob = label_blob.clone();
                    }
                    item.decided_by = decided_by.clone();
                    item.decided_at = Some(*at);
                }
            }
            Event::ModelFitted {
                version,
                alpha,
                trained_on,
                model,
                at,
            } => {
                for item in self.items.values_mut().filter(|i| i.status == Status::Pending) {
                    item.predicted_mean_dice = Some(model.predict(&item.class_uncertainties));
                }
                self.model = Some(FittedModel {
                    version: *version,
                    alpha: *alpha,
                    trained_on: trained_on.clone(),
                    fitted_at: *at,
                    model: model.clone(),
                });
            }
        }
    }

    pub fn find_image(&self, image_id: &str) -> Option<&QueueItem> {
        self.items.values().find(|i| i.image_id == image_id)
    }

    /// Pending items, scored ones ascending by predicted mean Dice, then
    /// unscored ones in ingestion order; ties by item id.
    pub fn queue(&self) -> Vec<&QueueItem> {
        let mut pending: Vec<&QueueItem> = self.items.values().filter(|i| i.status == Status::Pending).collect();
        pending.sort_by(|a, b| match (a.predicted_mean_dice, b.predicted_mean_dice) {
            (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.item_id.cmp(&b.item_id)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.seq.cmp(&b.seq).then_with(|| a.item_id.cmp(&b.item_id)),
        });
        pending
    }

    /// Items carrying ground truth, in ingestion order.
    pub fn labeled(&self) -> Vec<&QueueItem> {
        let mut items: Vec<&QueueItem> = self.items.values().filter(|i| i.dice.is_some()).collect();
        items.sort_by_key(|i| i.seq);
        items
    }
}
