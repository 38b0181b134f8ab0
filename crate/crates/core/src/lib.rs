//! Uncertainty-based quality estimation for semantic-segmentation predictions.
//!
//! The pipeline starts from a [`bundle::Bundle`] holding `T` Monte-Carlo dropout
//! softmax passes for one image. [`metrics`] reduces the passes to a
//! segmentation and scores it against a label, [`uncertainty`] turns the mean
//! probabilities into entropy maps and per-predicted-class uncertainties, and
//! [`stats`] relates those uncertainties to segmentation quality through
//! correlations and a pruned multiple linear regression. [`sim`] replays the
//! human-in-the-loop triage on a held-out split, and [`synth`] produces
//! corpora with a tunable uncertainty/quality coupling.

pub mod bundle;
pub mod metrics;
pub mod score;
pub mod sim;
pub mod stats;
pub mod synth;
pub mod uncertainty;

pub use bundle::{Bundle, BundleError, ClassSpec, LabelMap, ProbabilityStack};
pub use metrics::{DiceReport, MeanProbabilityMap, SegmentationMap};
pub use stats::{CorrelationReport, QualityModel};
pub use uncertainty::{ClassUncertaintyVector, UncertaintyMap};
