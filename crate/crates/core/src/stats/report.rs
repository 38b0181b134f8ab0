//! Plain-text tables for correlation and regression results.

use std::fmt::Write;

use super::correlation::CorrelationReport;
use super::model::QualityModel;

/// `***` for p < 0.01, `**` for p < 0.05, `*` for p < 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn rule(width: usize) -> String {
    "-".repeat(width)
}

pub fn correlation_table(report: &CorrelationReport, class_names: &[String]) -> String {
    let label_width = class_names.iter().map(String::len).max().unwrap_or(0).max(12);
    let width = label_width + 22;
    let mut out = String::new();
    let _ = writeln!(out, "Correlation of U_c with Dice_c (n = {})", report.n);
    let _ = writeln!(out, "{}", rule(width));
    let _ = writeln!(out, "{:<label_width$} {:>10} {:>10}", "Class", "r", "pairs");
    let _ = writeln!(out, "{}", rule(width));
    for (c, name) in class_names.iter().enumerate() {
        let r = report.per_class_r.get(c).copied().flatten();
        let r = r.map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"));
        let pairs = report.per_class_n.get(c).copied().unwrap_or(0);
        let _ = writeln!(out, "{name:<label_width$} {r:>10} {pairs:>10}");
    }
    let _ = writeln!(out, "{}", rule(width));
    let image = report
        .image_level_r
        .map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"));
    let _ = writeln!(out, "Image-level r, mean entropy vs mean Dice: {image}");
    out
}

/// Regression table with coefficients and significance stars; pruned
/// predictors appear as blank rows.
pub fn regression_table(model: &QualityModel) -> String {
    let label_width = model
        .class_names
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(20);
    let width = label_width + 16;
    let mut out = String::new();
    let _ = writeln!(out, "{:^width$}", "Dependent variable: mean Dice");
    let _ = writeln!(out, "{}", rule(width));
    let coef = |value: f64, p: f64| format!("{value:.3}{:<3}", significance_stars(p));
    let _ = writeln!(
        out,
        "{:<label_width$} {:>15}",
        "Const",
        coef(model.intercept, model.p_values[0])
    );
    for (c, name) in model.class_names.iter().enumerate() {
        match model.included_predictors.iter().position(|&i| i == c) {
            Some(j) => {
                let _ = writeln!(
                    out,
                    "{name:<label_width$} {:>15}",
                    coef(model.coefficients[j], model.p_values[j + 1])
                );
            }
            None => {
                let _ = writeln!(out, "{name}");
            }
        }
    }
    let _ = writeln!(out, "{}", rule(width));
    let _ = writeln!(out, "{:<label_width$} {:>12}", "Observations", model.n_observations);
    let _ = writeln!(out, "{:<label_width$} {:>12.3}", "R2", model.r_squared);
    let _ = writeln!(out, "{:<label_width$} {:>12.3}", "Adjusted R2", model.adj_r_squared);
    let _ = writeln!(
        out,
        "{:<label_width$} {:>12.3}",
        "Residual Std. Error", model.residual_std_error
    );
    let _ = writeln!(
        out,
        "{:<label_width$} {:>15}",
        "F Statistic",
        coef(model.f_statistic, model.f_p_value)
    );
    let _ = writeln!(out, "{}", rule(width));
    let _ = writeln!(out, "Note: * p<0.1; ** p<0.05; *** p<0.01");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MODEL_FORMAT_VERSION;

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.005), "***");
        assert_eq!(significance_stars(0.01), "**");
        assert_eq!(significance_stars(0.07), "*");
        assert_eq!(significance_stars(0.5), "");
    }

    #[test]
    fn regression_layout() {
        let model = QualityModel {
            format_version: MODEL_FORMAT_VERSION,
            class_names: vec!["Background".into(), "Flank wear".into()],
            included_predictors: vec![1],
            pruned_predictors: vec![0],
            unobserved_predictors: vec![],
            intercept: 0.922,
            coefficients: vec![-0.165],
            std_errors: vec![0.01, 0.02],
            t_values: vec![90.0, -8.0],
            p_values: vec![0.0, 0.0001],
            r_squared: 0.718,
            adj_r_squared: 0.7,
            residual_std_error: 0.066,
            f_statistic: 39.849,
            f_p_value: 1e-12,
            n_observations: 51,
            imputation_means: vec![0.0, 0.0],
            alpha: 0.05,
        };
        let table = regression_table(&model);
        assert!(table.contains("0.922***"));
        assert!(table.contains("-0.165***"));
        assert!(table.contains("39.849***"));
        assert!(table.lines().any(|l| l == "Background"));
        assert!(table.contains("Observations"));
        assert!(table.contains("0.718"));
    }
}
