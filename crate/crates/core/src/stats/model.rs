//! The quality model: mean Dice regressed on per-predicted-class entropy,
//! pruned by backward elimination.

use serde::{Deserialize, Serialize};

use super::ols::{ols, OlsFit};
use super::StatsError;
use crate::bundle::ClassSpec;
use crate::uncertainty::ClassUncertaintyVector;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One image's regression inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityObservation {
    pub uncertainty: ClassUncertaintyVector,
    pub mean_dice: f64,
}

/// Fitted estimator of an image's mean Dice. Immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityModel {
    pub format_version: u32,
    pub class_names: Vec<String>,
    /// Class indices kept as predictors, ascending.
    pub included_predictors: Vec<usize>,
    /// Classes removed by backward elimination, in removal order.
    pub pruned_predictors: Vec<usize>,
    /// Classes never predicted anywhere in the corpus; they cannot enter the design.
    pub unobserved_predictors: Vec<usize>,
    pub intercept: f64,
    /// One per included predictor, same order.
    pub coefficients: Vec<f64>,
    /// Intercept first, then included predictors.
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_std_error: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub n_observations: usize,
    /// Per-class mean of present `U_c`, substituted for absent values.
    pub imputation_means: Vec<f64>,
    pub alpha: f64,
}

impl QualityModel {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Estimated mean Dice, unclamped.
    pub fn predict(&self, u: &ClassUncertaintyVector) -> f64 {
        self.intercept
            + self
                .included_predictors
                .iter()
                .zip(&self.coefficients)
                .map(|(&c, &b)| b * u.u.get(c).copied().flatten().unwrap_or(self.imputation_means[c]))
                .sum::<f64>()
    }

    /// [`QualityModel::predict`] clamped to `[0, 1]` for display.
    pub fn predict_clamped(&self, u: &ClassUncertaintyVector) -> f64 {
        self.predict(u).clamp(0.0, 1.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StatsError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| StatsError::ModelFormat(e.to_string()))?;
        let version = raw
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| StatsError::ModelFormat("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(StatsError::ModelVersion(version as u32));
        }
        let model: QualityModel =
            serde_json::from_value(raw).map_err(|e| StatsError::ModelFormat(e.to_string()))?;
        let c = model.class_names.len();
        if model.imputation_means.len() != c
            || model.coefficients.len() != model.included_predictors.len()
            || model.included_predictors.iter().any(|&i| i >= c)
        {
            return Err(StatsError::ModelFormat("inconsistent field lengths".into()));
        }
        Ok(model)
    }
}

/// Fits OLS of mean Dice on all observed class uncertainties, then drops the
/// predictor with the largest p-value while that p-value is `>= alpha`,
/// refitting after each removal.
///
/// Absent `U_c` values are replaced by the corpus mean of the present ones.
pub fn fit_quality_model(
    corpus: &[QualityObservation],
    spec: &ClassSpec,
    alpha: f64,
) -> Result<QualityModel, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let classes = spec.num_classes();
    for (index, obs) in corpus.iter().enumerate() {
        if obs.uncertainty.num_classes() != classes {
            return Err(StatsError::ClassCountMismatch {
                index,
                expected: classes,
                actual: obs.uncertainty.num_classes(),
            });
        }
    }

    let mut imputation_means = vec![0.0; classes];
    let mut candidates = Vec::new();
    let mut unobserved = Vec::new();
    for (c, mean) in imputation_means.iter_mut().enumerate() {
        let present: Vec<f64> = corpus.iter().filter_map(|o| o.uncertainty.u[c]).collect();
        if present.is_empty() {
            unobserved.push(c);
        } else {
            *mean = present.iter().sum::<f64>() / present.len() as f64;
            candidates.push(c);
        }
    }
    let n = corpus.len();
    if n <= candidates.len() + 1 {
        return Err(StatsError::InsufficientData {
            n,
            required: candidates.len() + 2,
        });
    }

    let columns: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            corpus
                .iter()
                .map(|o| o.uncertainty.u[c].unwrap_or(imputation_means[c]))
                .collect()
        })
        .collect();
    let y: Vec<f64> = corpus.iter().map(|o| o.mean_dice).collect();

    let mut pruned = Vec::new();
    let fit = loop {
        let design: Vec<Vec<f64>> = candidates.iter().map(|&c| columns[c].clone()).collect();
        let fit = ols(&y, &design)?;
        // Ties resolve to the lowest class index.
        let worst = fit.p_values[1..]
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, &p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((i, p)),
            });
        match worst {
            Some((i, p)) if p >= alpha => pruned.push(candidates.remove(i)),
            _ => break fit,
        }
    };

    Ok(assemble(
        spec,
        candidates,
        pruned,
        unobserved,
        fit,
        imputation_means,
        alpha,
    ))
}

fn assemble(
    spec: &ClassSpec,
    included: Vec<usize>,
    pruned: Vec<usize>,
    unobserved: Vec<usize>,
    fit: OlsFit,
    imputation_means: Vec<f64>,
    alpha: f64,
) -> QualityModel {
    QualityModel {
        format_version: MODEL_FORMAT_VERSION,
        class_names: spec.class_names().to_vec(),
        included_predictors: included,
        pruned_predictors: pruned,
        unobserved_predictors: unobserved,
        intercept: fit.coefficients[0],
        coefficients: fit.coefficients[1..].to_vec(),
        std_errors: fit.std_errors,
        t_values: fit.t_values,
        p_values: fit.p_values,
        r_squared: fit.r_squared,
        adj_r_squared: fit.adj_r_squared,
        residual_std_error: fit.residual_std_error,
        f_statistic: fit.f_statistic,
        f_p_value: fit.f_p_value,
        n_observations: fit.n,
        imputation_means,
        alpha,
    }
}
