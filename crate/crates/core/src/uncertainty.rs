//! Predictive-entropy maps and their per-image and per-predicted-class
//! aggregates.

use serde::{Deserialize, Serialize};

use crate::bundle::ClassSpec;
use crate::metrics::{MeanProbabilityMap, MetricsError, SegmentationMap};

/// Per-pixel entropy (natural log), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub height: usize,
    pub width: usize,
    /// Number of classes of the distribution the entropy was taken over;
    /// bounds every value by `ln(classes)`.
    pub classes: usize,
    pub values: Vec<f64>,
}

impl UncertaintyMap {
    pub fn max_entropy(&self) -> f64 {
        (self.classes as f64).ln()
    }

    /// 8-bit grayscale rendering, `round(255 * H / ln C)`: brighter is more uncertain.
    pub fn to_grayscale(&self) -> Vec<u8> {
        let scale = 255.0 / self.max_entropy();
        self.values
            .iter()
            .map(|&h| (h * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Mean entropy per predicted class. `None` marks a class that was not
/// predicted anywhere in the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassUncertaintyVector {
    pub u: Vec<Option<f64>>,
    pub pixel_counts: Vec<usize>,
}

impl ClassUncertaintyVector {
    pub fn num_classes(&self) -> usize {
        self.u.len()
    }

    pub fn get(&self, class: usize) -> Option<f64> {
        self.u[class]
    }
}

/// Shannon entropy of one distribution with `0 ln 0 = 0`.
///
/// The distribution is renormalized first: stored softmax sums are only
/// within `1e-4` of one, and the result must stay inside `[0, ln C]`.
pub fn entropy(probabilities: impl Iterator<Item = f64> + Clone) -> f64 {
    let total: f64 = probabilities.clone().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = probabilities
        .filter(|&p| p > 0.0)
        .map(|p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    h.max(0.0)
}

pub fn entropy_map(map: &MeanProbabilityMap) -> UncertaintyMap {
    let max = (map.classes() as f64).ln();
    let values = (0..map.pixels())
        .map(|i| entropy(map.pixel(i)).min(max))
        .collect();
    UncertaintyMap {
        height: map.height(),
        width: map.width(),
        classes: map.classes(),
        values,
    }
}

/// Mean entropy over the pixels predicted as each class, with pixel counts.
pub fn class_uncertainties(
    umap: &UncertaintyMap,
    seg: &SegmentationMap,
    spec: &ClassSpec,
) -> Result<ClassUncertaintyVector, MetricsError> {
    if (umap.height, umap.width) != (seg.height, seg.width) {
        return Err(MetricsError::DimensionMismatch {
            left: "uncertainty map",
            lh: umap.height,
            lw: umap.width,
            right: "segmentation",
            rh: seg.height,
            rw: seg.width,
        });
    }
    let classes = spec.num_classes();
    let mut sums = vec![0.0f64; classes];
    let mut counts = vec![0usize; classes];
    for (&h, &c) in umap.values.iter().zip(&seg.values) {
        let c = c as usize;
        if c >= classes {
            return Err(MetricsError::ClassOutOfRange {
                what: "segmentation",
                value: c as u8,
                classes,
            });
        }
        sums[c] += h;
        counts[c] += 1;
    }
    let u = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(ClassUncertaintyVector {
        u,
        pixel_counts: counts,
    })
}

pub fn image_mean_entropy(umap: &UncertaintyMap) -> f64 {
    umap.values.iter().sum::<f64>() / umap.values.len() as f64
}
