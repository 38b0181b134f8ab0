//! Ordinary least squares with an intercept, solved by Householder QR.

use serde::{Deserialize, Serialize};

use super::dist::{f_sf, two_sided_p};
use super::StatsError;

/// Relative threshold on `|R_jj|` against the original column norm below
/// which a column counts as linearly dependent on the previous ones.
const RANK_TOLERANCE: f64 = 1e-10;

/// A fitted OLS model. Index 0 of the coefficient-wise vectors is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_std_error: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub n: usize,
    pub df_residual: usize,
}

impl OlsFit {
    pub fn num_predictors(&self) -> usize {
        self.coefficients.len() - 1
    }
}

/// Regresses `y` on an intercept plus the given predictor columns.
pub fn ols(y: &[f64], predictors: &[Vec<f64>]) -> Result<OlsFit, StatsError> {
    let n = y.len();
    let k = predictors.len();
    let p = k + 1;
    if n <= p {
        return Err(StatsError::InsufficientData { n, required: p + 1 });
    }
    for col in predictors {
        if col.len() != n {
            return Err(StatsError::LengthMismatch(col.len(), n));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("predictor"));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("response"));
    }

    // Column-major working copy of the design [1 | X].
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(p);
    a.push(vec![1.0; n]);
    a.extend(predictors.iter().cloned());
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut qty = y.to_vec();

    for j in 0..p {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOLERANCE * norms[j] || norm == 0.0 {
            return Err(StatsError::SingularDesign { column: j });
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v = a[j][j..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            let reflect = |col: &mut [f64]| {
                let s: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * s / vv;
                col.iter_mut().zip(&v).for_each(|(c, vi)| *c -= f * vi);
            };
            for col in a.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut qty[j..]);
        }
    }

    // R is the upper triangle: r(i, j) = a[j][i] for i <= j.
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }

    // R^{-1}, upper triangular, for (X'X)^{-1} = R^{-1} R^{-T}.
    let mut rinv = vec![vec![0.0; p]; p];
    #[allow(clippy::needless_range_loop)]
    for j in 0..p {
        rinv[j][j] = 1.0 / r(j, j);
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|l| r(i, l) * rinv[l][j]).sum();
            rinv[i][j] = -s / r(i, i);
        }
    }

    let fitted: Vec<f64> = (0..n)
        .map(|i| beta[0] + predictors.iter().zip(&beta[1..]).map(|(col, b)| col[i] * b).sum::<f64>())
        .collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if sst == 0.0 {
        return Err(StatsError::ConstantResponse);
    }

    let df = n - p;
    let sigma2 = sse / df as f64;
    let std_errors: Vec<f64> = (0..p)
        .map(|j| (sigma2 * (j..p).map(|l| rinv[j][l] * rinv[j][l]).sum::<f64>()).sqrt())
        .collect();
    let t_values: Vec<f64> = beta
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| {
            if se > 0.0 {
                b / se
            } else if b == 0.0 {
                0.0
            } else {
                f64::MAX.copysign(b)
            }
        })
        .collect();
    let p_values = t_values.iter().map(|&t| two_sided_p(t, df as f64)).collect();

    let r_squared = (1.0 - sse / sst).clamp(0.0, 1.0);
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df as f64;
    let (f_statistic, f_p_value) = if k == 0 {
        (0.0, 1.0)
    } else if sigma2 == 0.0 {
        (f64::MAX, 0.0)
    } else {
        let f = ((sst - sse).max(0.0) / k as f64) / sigma2;
        (f, f_sf(f, k as f64, df as f64))
    };

    Ok(OlsFit {
        coefficients: beta,
        std_errors,
        t_values,
        p_values,
        fitted,
        residuals,
        r_squared,
        adj_r_squared,
        residual_std_error: sigma2.sqrt(),
        f_statistic,
        f_p_value,
        n,
        df_residual: df,
    })
}
