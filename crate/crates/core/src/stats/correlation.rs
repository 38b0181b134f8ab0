use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::metrics::DiceReport;
use crate::uncertainty::ClassUncertaintyVector;

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { n, required: 3 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("correlation input"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One image's inputs to [`correlation_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSample {
    pub uncertainty: ClassUncertaintyVector,
    pub dice: DiceReport,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `r(U_c, DSC_c)` per class; `None` when fewer than three images
    /// predicted the class or either series is constant.
    pub per_class_r: Vec<Option<f64>>,
    /// Usable (present) pairs per class.
    pub per_class_n: Vec<usize>,
    /// `r(mean entropy, mean Dice)` over all images.
    pub image_level_r: Option<f64>,
    pub n: usize,
}

pub fn correlation_report(corpus: &[CorrelationSample]) -> Result<CorrelationReport, StatsError> {
    let n = corpus.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { n, required: 3 });
    }
    let classes = corpus[0].uncertainty.num_classes();
    for (index, s) in corpus.iter().enumerate() {
        for actual in [s.uncertainty.num_classes(), s.dice.per_class.len()] {
            if actual != classes {
                return Err(StatsError::ClassCountMismatch {
                    index,
                    expected: classes,
                    actual,
                });
            }
        }
    }
    let mut per_class_r = Vec::with_capacity(classes);
    let mut per_class_n = Vec::with_capacity(classes);
    for c in 0..classes {
        let (u, d): (Vec<f64>, Vec<f64>) = corpus
            .iter()
            .filter_map(|s| s.uncertainty.u[c].map(|u| (u, s.dice.per_class[c])))
            .unzip();
        per_class_n.push(u.len());
        per_class_r.push(pearson(&u, &d).ok());
    }
    let entropy: Vec<f64> = corpus.iter().map(|s| s.mean_entropy).collect();
    let dice: Vec<f64> = corpus.iter().map(|s| s.dice.mean_dice).collect();
    Ok(CorrelationReport {
        per_class_r,
        per_class_n,
        image_level_r: pearson(&entropy, &dice).ok(),
        n,
    })
}
