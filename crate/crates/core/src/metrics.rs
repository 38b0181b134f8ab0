//! Segmentation reduction and quality metrics: mean softmax, argmax
//! segmentation, per-class Dice, pixel accuracy, inverse-frequency class
//! weights and weighted categorical cross-entropy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{ClassSpec, LabelMap, ProbabilityStack};

/// Probabilities are clamped to this before taking logs in the loss.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {left} is {lh}x{lw}, {right} is {rh}x{rw}")]
    DimensionMismatch {
        left: &'static str,
        lh: usize,
        lw: usize,
        right: &'static str,
        rh: usize,
        rw: usize,
    },
    #[error("class count mismatch: expected {expected}, got {actual}")]
    ClassCountMismatch { expected: usize, actual: usize },
    #[error("{what} contains class index {value} but only {classes} classes exist")]
    ClassOutOfRange {
        what: &'static str,
        value: u8,
        classes: usize,
    },
    #[error("class {index} ({name}) never occurs in the training labels")]
    AbsentClass { index: usize, name: String },
    #[error("no training labels given")]
    NoLabels,
}

/// Per-pixel mean of the `T` softmax passes, class-major (`C x H x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanProbabilityMap {
    classes: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl MeanProbabilityMap {
    /// Builds a map from class-major values. Used mostly by tests and tools;
    /// no simplex check is made here.
    pub fn from_values(classes: usize, height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), classes * height * width, "map shape");
        MeanProbabilityMap {
            classes,
            height,
            width,
            values,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, class: usize, pixel: usize) -> f64 {
        self.values[class * self.pixels() + pixel]
    }

    /// Class distribution at one pixel.
    pub fn pixel(&self, pixel: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        let n = self.pixels();
        (0..self.classes).map(move |c| self.values[c * n + pixel])
    }
}

/// How a segmentation was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationSource {
    /// Argmax of the mean over all passes.
    MeanProbability,
    /// Argmax of a single pass.
    Pass(usize),
}

/// Predicted class per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u8>,
    pub source: SegmentationSource,
}

impl SegmentationMap {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Counts of pixels per class.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &v in &self.values {
            counts[v as usize] += 1;
        }
        counts
    }
}

/// Element-wise mean of the passes.
pub fn mean_probability(stack: &ProbabilityStack) -> MeanProbabilityMap {
    let len = stack.classes() * stack.pixels();
    let mut values = vec![0.0f64; len];
    for t in 0..stack.passes() {
        for (acc, &p) in values.iter_mut().zip(stack.pass(t)) {
            *acc += p as f64;
        }
    }
    let inv = 1.0 / stack.passes() as f64;
    values.iter_mut().for_each(|v| *v *= inv);
    MeanProbabilityMap {
        classes: stack.classes(),
        height: stack.height(),
        width: stack.width(),
        values,
    }
}

/// Lowest index attaining the maximum.
fn argmax(values: impl Iterator<Item = f64>) -> u8 {
    let mut best = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for (c, v) in values.enumerate() {
        if v > best_value {
            best = c;
            best_value = v;
        }
    }
    best as u8
}

/// Per-pixel argmax of the mean map; ties go to the lowest class index.
pub fn argmax_segmentation(map: &MeanProbabilityMap) -> SegmentationMap {
    let values = (0..map.pixels()).map(|i| argmax(map.pixel(i))).collect();
    SegmentationMap {
        height: map.height,
        width: map.width,
        values,
        source: SegmentationSource::MeanProbability,
    }
}

/// Argmax of a single pass, same tie rule as [`argmax_segmentation`].
pub fn pass_segmentation(stack: &ProbabilityStack, pass: usize) -> SegmentationMap {
    let n = stack.pixels();
    let slice = stack.pass(pass);
    let values = (0..n)
        .map(|i| argmax((0..stack.classes()).map(|c| slice[c * n + i] as f64)))
        .collect();
    SegmentationMap {
        height: stack.height(),
        width: stack.width(),
        values,
        source: SegmentationSource::Pass(pass),
    }
}

/// Dice per class, their mean, and pixel accuracy for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub per_class: Vec<f64>,
    pub mean_dice: f64,
    pub pixel_accuracy: f64,
}

fn check_dims(
    left: &'static str,
    (lh, lw): (usize, usize),
    right: &'static str,
    (rh, rw): (usize, usize),
) -> Result<(), MetricsError> {
    if (lh, lw) != (rh, rw) {
        return Err(MetricsError::DimensionMismatch {
            left,
            lh,
            lw,
            right,
            rh,
            rw,
        });
    }
    Ok(())
}

fn check_classes(what: &'static str, values: &[u8], classes: usize) -> Result<(), MetricsError> {
    match values.iter().find(|&&v| v as usize >= classes) {
        Some(&value) => Err(MetricsError::ClassOutOfRange {
            what,
            value,
            classes,
        }),
        None => Ok(()),
    }
}

/// Dice per class `2|P∩G| / (|P|+|G|)`, with a class absent from both maps
/// scoring 1. The mean runs over all classes including background.
pub fn dice_report(
    pred: &SegmentationMap,
    label: &LabelMap,
    spec: &ClassSpec,
) -> Result<DiceReport, MetricsError> {
    check_dims(
        "prediction",
        (pred.height, pred.width),
        "label",
        (label.height(), label.width()),
    )?;
    let classes = spec.num_classes();
    check_classes("prediction", &pred.values, classes)?;
    check_classes("label", label.values(), classes)?;

    let mut intersection = vec![0usize; classes];
    let mut pred_count = vec![0usize; classes];
    let mut label_count = vec![0usize; classes];
    let mut correct = 0usize;
    for (&p, &g) in pred.values.iter().zip(label.values()) {
        pred_count[p as usize] += 1;
        label_count[g as usize] += 1;
        if p == g {
            intersection[p as usize] += 1;
            correct += 1;
        }
    }
    let per_class: Vec<f64> = (0..classes)
        .map(|c| {
            let denom = pred_count[c] + label_count[c];
            if denom == 0 {
                1.0
            } else {
                2.0 * intersection[c] as f64 / denom as f64
            }
        })
        .collect();
    let mean_dice = per_class.iter().sum::<f64>() / classes as f64;
    Ok(DiceReport {
        per_class,
        mean_dice,
        pixel_accuracy: correct as f64 / pred.pixels() as f64,
    })
}

/// Inverse-frequency class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        ClassWeights(vec![1.0; classes])
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

/// `w_c = N / (C * N_c)`, so the pixel-frequency-weighted mean weight is 1.
pub fn class_weights(training_labels: &[LabelMap], spec: &ClassSpec) -> Result<ClassWeights, MetricsError> {
    if training_labels.is_empty() {
        return Err(MetricsError::NoLabels);
    }
    let classes = spec.num_classes();
    let mut counts = vec![0u64; classes];
    for label in training_labels {
        check_classes("label", label.values(), classes)?;
        for &v in label.values() {
            counts[v as usize] += 1;
        }
    }
    if let Some(index) = counts.iter().position(|&n| n == 0) {
        return Err(MetricsError::AbsentClass {
            index,
            name: spec.class_names()[index].clone(),
        });
    }
    let total: u64 = counts.iter().sum();
    Ok(ClassWeights(
        counts
            .iter()
            .map(|&n| total as f64 / (classes as f64 * n as f64))
            .collect(),
    ))
}

/// `-(1/N) Σ_i w_{g_i} ln p_{i,g_i}` with probabilities clamped to
/// `[LOG_CLAMP, 1]`.
pub fn weighted_cross_entropy(
    map: &MeanProbabilityMap,
    label: &LabelMap,
    weights: &ClassWeights,
) -> Result<f64, MetricsError> {
    check_dims(
        "probability map",
        (map.height, map.width),
        "label",
        (label.height(), label.width()),
    )?;
    if weights.0.len() != map.classes {
        return Err(MetricsError::ClassCountMismatch {
            expected: map.classes,
            actual: weights.0.len(),
        });
    }
    check_classes("label", label.values(), map.classes)?;
    let n = map.pixels();
    let total: f64 = label
        .values()
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let g = g as usize;
            weights.0[g] * map.get(g, i).clamp(LOG_CLAMP, 1.0).ln()
        })
        .sum();
    Ok(-total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(h: usize, w: usize, values: Vec<u8>) -> SegmentationMap {
        SegmentationMap {
            height: h,
            width: w,
            values,
            source: SegmentationSource::MeanProbability,
        }
    }

    #[test]
    fn mean_of_two_passes() {
        let stack = ProbabilityStack::new(2, 2, 1, 1, vec![0.6, 0.4, 0.8, 0.2]).unwrap();
        let m = mean_probability(&stack);
        assert!((m.get(0, 0) - 0.7).abs() < 1e-7);
        assert!((m.get(1, 0) - 0.3).abs() < 1e-7);
    }

    #[test]
    fn mean_of_single_pass_is_identity() {
        let vals = vec![0.1, 0.9, 0.9, 0.1];
        let stack = ProbabilityStack::new(1, 2, 1, 2, vals.clone()).unwrap();
        let m = mean_probability(&stack);
        for (a, b) in m.values().iter().zip(&vals) {
            assert_eq!(*a, *b as f64);
        }
    }

    #[test]
    fn argmax_rules() {
        let m = MeanProbabilityMap::from_values(2, 1, 2, vec![0.7, 0.5, 0.3, 0.5]);
        assert_eq!(argmax_segmentation(&m).values, vec![0, 0]);
        let m = MeanProbabilityMap::from_values(3, 1, 1, vec![0.2, 0.4, 0.4]);
        assert_eq!(argmax_segmentation(&m).values, vec![1]);
    }

    #[test]
    fn dice_identical_maps() {
        let spec = ClassSpec::generic(3).unwrap();
        let values = vec![0, 1, 2, 2];
        let r = dice_report(&seg(2, 2, values.clone()), &LabelMap::new(2, 2, values).unwrap(), &spec).unwrap();
        assert_eq!(r.per_class, vec![1.0, 1.0, 1.0]);
        assert_eq!(r.pixel_accuracy, 1.0);
        assert_eq!(r.mean_dice, 1.0);
    }

    #[test]
    fn dice_worked_example() {
        let spec = ClassSpec::generic(2).unwrap();
        let r = dice_report(
            &seg(2, 2, vec![0, 1, 1, 1]),
            &LabelMap::new(2, 2, vec![0, 1, 0, 1]).unwrap(),
            &spec,
        )
        .unwrap();
        assert!((r.per_class[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class[1] - 0.8).abs() < 1e-15);
        assert!((r.mean_dice - 11.0 / 15.0).abs() < 1e-15);
        assert_eq!(r.pixel_accuracy, 0.75);
    }

    #[test]
    fn dice_false_positive_class_scores_zero() {
        let spec = ClassSpec::generic(3).unwrap();
        let r = dice_report(
            &seg(1, 3, vec![0, 2, 0]),
            &LabelMap::new(1, 3, vec![0, 1, 0]).unwrap(),
            &spec,
        )
        .unwrap();
        assert_eq!(r.per_class[2], 0.0);
        assert_eq!(r.per_class[1], 0.0);
    }

    #[test]
    fn dice_both_empty_is_one() {
        let spec = ClassSpec::generic(3).unwrap();
        let r = dice_report(&seg(1, 2, vec![0, 1]), &LabelMap::new(1, 2, vec![0, 1]).unwrap(), &spec).unwrap();
        assert_eq!(r.per_class[2], 1.0);
    }

    #[test]
    fn dice_dimension_mismatch() {
        let spec = ClassSpec::generic(2).unwrap();
        let err = dice_report(&seg(1, 2, vec![0, 1]), &LabelMap::new(2, 1, vec![0, 1]).unwrap(), &spec);
        assert!(matches!(err, Err(MetricsError::DimensionMismatch { .. })));
    }

    #[test]
    fn weights_equal_counts() {
        let spec = ClassSpec::generic(2).unwrap();
        let w = class_weights(&[LabelMap::new(1, 4, vec![0, 1, 1, 0]).unwrap()], &spec).unwrap();
        assert_eq!(w.0, vec![1.0, 1.0]);
    }

    #[test]
    fn weights_three_to_one() {
        let spec = ClassSpec::generic(2).unwrap();
        let w = class_weights(&[LabelMap::new(2, 2, vec![0, 0, 0, 1]).unwrap()], &spec).unwrap();
        assert!((w.0[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.0[1], 2.0);
    }

    #[test]
    fn weights_absent_class_is_named() {
        let spec = ClassSpec::new(vec!["bg".into(), "chip".into(), "edge".into()], 0).unwrap();
        let err = class_weights(&[LabelMap::new(1, 2, vec![0, 2]).unwrap()], &spec).unwrap_err();
        assert_eq!(
            err,
            MetricsError::AbsentClass {
                index: 1,
                name: "chip".into()
            }
        );
        assert!(err.to_string().contains("chip"));
        assert_eq!(class_weights(&[], &spec).unwrap_err(), MetricsError::NoLabels);
    }

    #[test]
    fn loss_perfect_is_zero() {
        let m = MeanProbabilityMap::from_values(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let l = weighted_cross_entropy(&m, &LabelMap::new(1, 2, vec![0, 1]).unwrap(), &ClassWeights::uniform(2)).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn loss_half_half_is_ln2() {
        let m = MeanProbabilityMap::from_values(2, 1, 1, vec![0.5, 0.5]);
        let l = weighted_cross_entropy(&m, &LabelMap::new(1, 1, vec![0]).unwrap(), &ClassWeights::uniform(2)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_clamps_zero_probability() {
        let m = MeanProbabilityMap::from_values(2, 1, 1, vec![0.0, 1.0]);
        let l = weighted_cross_entropy(&m, &LabelMap::new(1, 1, vec![0]).unwrap(), &ClassWeights::uniform(2)).unwrap();
        assert!((l + LOG_CLAMP.ln()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn dice_is_symmetric_and_bounded(
            pairs in proptest::collection::vec((0u8..4, 0u8..4), 16)
        ) {
            let spec = ClassSpec::generic(4).unwrap();
            let (p, g): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let a = dice_report(&seg(4, 4, p.clone()), &LabelMap::new(4, 4, g.clone()).unwrap(), &spec).unwrap();
            let b = dice_report(&seg(4, 4, g), &LabelMap::new(4, 4, p).unwrap(), &spec).unwrap();
            prop_assert_eq!(&a.per_class, &b.per_class);
            for d in &a.per_class {
                prop_assert!((0.0..=1.0).contains(d));
            }
            let mean = a.per_class.iter().sum::<f64>() / 4.0;
            prop_assert!((a.mean_dice - mean).abs() <= 1e-12);
        }

        #[test]
        fn dice_permutes_with_classes(
            pairs in proptest::collection::vec((0u8..3, 0u8..3), 9),
            perm_idx in 0usize..6,
        ) {
            const PERMS: [[u8; 3]; 6] = [[0,1,2],[0,2,1],[1,0,2],[1,2,0],[2,0,1],[2,1,0]];
            let perm = PERMS[perm_idx];
            let spec = ClassSpec::generic(3).unwrap();
            let (p, g): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let base = dice_report(&seg(3, 3, p.clone()), &LabelMap::new(3, 3, g.clone()).unwrap(), &spec).unwrap();
            let pp = p.iter().map(|&v| perm[v as usize]).collect();
            let gp = g.iter().map(|&v| perm[v as usize]).collect();
            let permuted = dice_report(&seg(3, 3, pp), &LabelMap::new(3, 3, gp).unwrap(), &spec).unwrap();
            for (c, &to) in perm.iter().enumerate() {
                prop_assert_eq!(base.per_class[c], permuted.per_class[to as usize]);
            }
        }

        #[test]
        fn single_pass_mean_argmax_equals_pass_argmax(raw in proptest::collection::vec(0.01f32..1.0, 3 * 6)) {
            let mut values = raw.clone();
            for i in 0..6 {
                let s: f32 = (0..3).map(|c| raw[c * 6 + i]).sum();
                for c in 0..3 {
                    values[c * 6 + i] = raw[c * 6 + i] / s;
                }
            }
            let stack = ProbabilityStack::new(1, 3, 2, 3, values).unwrap();
            let via_mean = argmax_segmentation(&mean_probability(&stack));
            prop_assert_eq!(via_mean.values, pass_segmentation(&stack, 0).values);
        }

        #[test]
        fn loss_non_increasing_in_true_class_probability(
            p_low in 0.0f64..1.0, delta in 0.0f64..1.0, other in 0.0f64..1.0, w in 0.1f64..5.0
        ) {
            let p_high = (p_low + delta).min(1.0);
            let label = LabelMap::new(1, 2, vec![0, 1]).unwrap();
            let weights = ClassWeights(vec![w, 1.0]);
            let at = |p: f64| {
                let m = MeanProbabilityMap::from_values(2, 1, 2, vec![p, other, 1.0 - p, 1.0 - other]);
                weighted_cross_entropy(&m, &label, &weights).unwrap()
            };
            prop_assert!(at(p_high) <= at(p_low));
            prop_assert!(at(p_low) >= 0.0);
        }
    }
}
