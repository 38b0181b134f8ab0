//! Human-in-the-loop triage simulation.
//!
//! The quality model is fitted once on a seeded random fit split. Images of
//! the remaining simulation split are forwarded to a perfect annotator (their
//! mean Dice becomes 1) in ascending order of estimated quality; system
//! performance at budget `k` is the mean over the simulation split after `k`
//! forwards. The same curve is produced for a ranking by true quality
//! (oracle) and for random forwarding.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::ClassSpec;
use crate::stats::{fit_quality_model, QualityModel, QualityObservation, StatsError};

/// Stream used for Monte-Carlo baseline shuffles so they never overlap the
/// split shuffle.
const BASELINE_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("corpus of {corpus} images leaves no simulation split after fitting on {fit_count}")]
    CorpusTooSmall { corpus: usize, fit_count: usize },
    #[error("fit_count {fit_count} is below the {required} needed for {predictors} predictors")]
    FitCountTooSmall {
        fit_count: usize,
        predictors: usize,
        required: usize,
    },
    #[error("monte-carlo baseline needs at least one trial")]
    NoTrials,
    #[error("budget {k} exceeds simulation split of {n}")]
    BudgetOutOfRange { k: usize, n: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RandomBaseline {
    /// Exact expectation over uniformly random forwarding sets.
    Analytic,
    /// Average over seeded random forwarding orders.
    MonteCarlo { trials: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub fit_count: usize,
    pub seed: u64,
    pub alpha: f64,
    pub random_baseline: RandomBaseline,
}

impl SimulationConfig {
    pub fn new(fit_count: usize, seed: u64) -> Self {
        SimulationConfig {
            fit_count,
            seed,
            alpha: 0.05,
            random_baseline: RandomBaseline::Analytic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Uncertainty,
    Random,
    Oracle,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Uncertainty => "uncertainty",
            Policy::Random => "random",
            Policy::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub performance: f64,
}

/// System performance for every budget `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageCurve {
    pub policy: Policy,
    pub points: Vec<CurvePoint>,
}

impl TriageCurve {
    pub fn at(&self, budget: usize) -> f64 {
        self.points[budget].performance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub model: QualityModel,
    /// Corpus indices of the fit split, in shuffle order.
    pub fit_indices: Vec<usize>,
    /// Corpus indices of the simulation split, in shuffle order.
    pub simulation_indices: Vec<usize>,
    /// Estimated mean Dice per simulation image, aligned with `simulation_indices`.
    pub predicted: Vec<f64>,
    /// True mean Dice per simulation image, aligned with `simulation_indices`.
    pub actual: Vec<f64>,
    /// Simulation-split positions in uncertainty-policy forwarding order.
    pub forwarding_order: Vec<usize>,
    pub curves: Vec<TriageCurve>,
}

impl SimulationReport {
    pub fn curve(&self, policy: Policy) -> Option<&TriageCurve> {
        self.curves.iter().find(|c| c.policy == policy)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Expected performance when `k` of the images are forwarded uniformly at
/// random: `k/n + (1 - k/n) * mean(d)`.
pub fn random_baseline(dice: &[f64], k: usize) -> Result<f64, SimError> {
    let n = dice.len();
    if k > n || n == 0 {
        return Err(SimError::BudgetOutOfRange { k, n });
    }
    let frac = k as f64 / n as f64;
    Ok(frac + (1.0 - frac) * mean(dice))
}

/// Performance after forwarding the first `k` entries of `order`, for all `k`.
///
/// Budget 0 is the plain mean of `dice` and budget `n` is exactly 1.
pub fn curve_for_order(dice: &[f64], order: &[usize]) -> Vec<CurvePoint> {
    let n = dice.len();
    let mut retained = vec![0.0; n + 1];
    for k in (0..n).rev() {
        retained[k] = retained[k + 1] + dice[order[k]];
    }
    (0..=n)
        .map(|k| {
            let performance = if k == 0 {
                mean(dice)
            } else if k == n {
                1.0
            } else {
                (k as f64 + retained[k]) / n as f64
            };
            CurvePoint {
                budget: k,
                performance,
            }
        })
        .collect()
}

/// Positions sorted ascending by score, ties broken by position.
fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

fn random_curve(dice: &[f64], mode: RandomBaseline, seed: u64) -> Result<Vec<CurvePoint>, SimError> {
    let n = dice.len();
    match mode {
        RandomBaseline::Analytic => (0..=n)
            .map(|k| {
                Ok(CurvePoint {
                    budget: k,
                    performance: random_baseline(dice, k)?,
                })
            })
            .collect(),
        RandomBaseline::MonteCarlo { trials } => {
            if trials == 0 {
                return Err(SimError::NoTrials);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(BASELINE_STREAM);
            let mut sums = vec![0.0; n + 1];
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..trials {
                order.shuffle(&mut rng);
                for (acc, p) in sums.iter_mut().zip(curve_for_order(dice, &order)) {
                    *acc += p.performance;
                }
            }
            Ok(sums
                .into_iter()
                .enumerate()
                .map(|(k, s)| CurvePoint {
                    budget: k,
                    performance: s / trials as f64,
                })
                .collect())
        }
    }
}

/// Fits the quality model on the fit split and produces uncertainty, random
/// and oracle curves over the simulation split.
pub fn run_simulation(
    corpus: &[QualityObservation],
    spec: &ClassSpec,
    config: &SimulationConfig,
) -> Result<SimulationReport, SimError> {
    let predictors = spec.num_classes();
    if config.fit_count < predictors + 2 {
        return Err(SimError::FitCountTooSmall {
            fit_count: config.fit_count,
            predictors,
            required: predictors + 2,
        });
    }
    if corpus.len() <= config.fit_count {
        return Err(SimError::CorpusTooSmall {
            corpus: corpus.len(),
            fit_count: config.fit_count,
        });
    }
    if let RandomBaseline::MonteCarlo { trials: 0 } = config.random_baseline {
        return Err(SimError::NoTrials);
    }

    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let (fit_indices, simulation_indices) = indices.split_at(config.fit_count);

    let fit_split: Vec<QualityObservation> = fit_indices.iter().map(|&i| corpus[i].clone()).collect();
    let model = fit_quality_model(&fit_split, spec, config.alpha)?;

    let predicted: Vec<f64> = simulation_indices
        .iter()
        .map(|&i| model.predict(&corpus[i].uncertainty))
        .collect();
    let actual: Vec<f64> = simulation_indices.iter().map(|&i| corpus[i].mean_dice).collect();

    let forwarding_order = ascending_order(&predicted);
    let curves = vec![
        TriageCurve {
            policy: Policy::Uncertainty,
            points: curve_for_order(&actual, &forwarding_order),
        },
        TriageCurve {
            policy: Policy::Random,
            points: random_curve(&actual, config.random_baseline, config.seed)?,
        },
        TriageCurve {
            policy: Policy::Oracle,
            points: curve_for_order(&actual, &ascending_order(&actual)),
        },
    ];

    Ok(SimulationReport {
        config: *config,
        model,
        fit_indices: fit_indices.to_vec(),
        simulation_indices: simulation_indices.to_vec(),
        predicted,
        actual,
        forwarding_order,
        curves,
    })
}

/// Writes `policy,budget,performance` rows, curves in the given order and
/// budgets ascending.
pub fn export_curves<W: Write>(curves: &[TriageCurve], sink: W) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["policy", "budget", "performance"])?;
    for curve in curves {
        for p in &curve.points {
            writer.write_record([
                curve.policy.as_str(),
                &p.budget.to_string(),
                &p.performance.to_string(),
            ])?;
        }
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
