//! Student-t and F tail probabilities (regularized incomplete beta based).

use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

/// `P(T_df <= t)`.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom must be positive")
        .cdf(t)
}

/// Two-sided p-value `2 P(T_df >= |t|)`.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("degrees of freedom must be positive");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Upper tail `P(F_{d1,d2} >= f)`.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return 1.0;
    }
    let dist = FisherSnedecor::new(d1, d2).expect("degrees of freedom must be positive");
    dist.sf(f.max(0.0)).clamp(0.0, 1.0)
}
