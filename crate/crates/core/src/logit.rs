//! Binary logistic regression: relabeling, feature selection, Newton/IRLS
//! maximum likelihood with step halving, and Wald inference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::cohort::{Cohort, LabelKind, Labels};
use crate::error::{Error, Result};
use crate::schema::{col, FeatureKind};

/// Two-sided 95% normal quantile used for the confidence intervals.
pub const Z_95: f64 = 1.96;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Low and Medium become 0; High and hospitalized stroke become 1.
pub fn relabel_binary(c: &Cohort) -> Result<Cohort> {
    let labels = match c.labels() {
        Some(l) => l,
        None if c.n_rows() == 0 => {
            return c.with_labels(Some(Labels::new(LabelKind::Binary, vec![])?));
        }
        None => return Err(Error::Unlabeled),
    };
    let values = match labels.kind {
        LabelKind::Binary => labels.values.clone(),
        LabelKind::Risk | LabelKind::RiskOrStroke => {
            labels.values.iter().map(|&v| (v >= 2) as u32).collect()
        }
    };
    c.with_labels(Some(Labels::new(LabelKind::Binary, values)?))
}

/// Keep one column of a correlated group and drop the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    #[serde(default)]
    pub keep: Option<String>,
    pub drop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Columns with variance strictly below this are dropped. The default
    /// removes binary flags rarer than about 0.4%.
    pub variance_threshold: f64,
    pub rules: Vec<SelectionRule>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            variance_threshold: 0.004,
            rules: default_selection_rules(),
        }
    }
}

/// Keep BMI over Height and Weight; drop Ethnicity.
pub fn default_selection_rules() -> Vec<SelectionRule> {
    vec![
        SelectionRule {
            keep: Some(col::BMI.to_string()),
            drop: vec![col::HEIGHT.to_string(), col::WEIGHT.to_string()],
        },
        SelectionRule {
            keep: None,
            drop: vec![col::ETHNICITY.to_string()],
        },
    ]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub dropped_by_rule: Vec<String>,
    pub dropped_by_variance: Vec<(String, f64)>,
}

fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Apply explicit keep/drop rules, then drop low-variance columns. Columns
/// named as `keep` in a rule are never dropped for low variance.
pub fn select_features(c: &Cohort, cfg: &SelectionConfig) -> Result<(Cohort, SelectionReport)> {
    let mut report = SelectionReport::default();
    let mut protected = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    for rule in &cfg.rules {
        if let Some(k) = &rule.keep {
            c.schema().require(k).map_err(|_| Error::UnknownColumn(k.clone()))?;
            protected.push(k.clone());
        }
        for d in &rule.drop {
            c.schema().require(d).map_err(|_| Error::UnknownColumn(d.clone()))?;
            if !dropped.contains(d) {
                dropped.push(d.clone());
            }
        }
    }
    report.dropped_by_rule = dropped.clone();
    let mut keep = Vec::new();
    for (j, f) in c.schema().features.iter().enumerate() {
        if dropped.contains(&f.name) {
            continue;
        }
        if !protected.contains(&f.name) {
            let var = population_variance(&c.column(j));
            if var < cfg.variance_threshold {
                report.dropped_by_variance.push((f.name.clone(), var));
                continue;
            }
        }
        keep.push(j);
    }
    Ok((c.select_columns(&keep), report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub feature_names: Vec<String>,
    /// Intercept first, then one coefficient per feature (log-odds units,
    /// per standardized unit for numerical features).
    pub coefficients: Vec<f64>,
    /// z-score parameters for numerical features; `None` for categorical codes.
    pub standardization: Vec<Option<Standardizer>>,
}

impl LogitModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.standardization)
            .map(|(&x, s)| match s {
                Some(s) => (x - s.mean) / s.scale,
                None => x,
            })
            .collect()
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.transform(row)
            .iter()
            .zip(&self.coefficients[1..])
            .fold(self.coefficients[0], |z, (x, b)| z + x * b)
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogitConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// ‖β‖ above this is reported as perfect separation.
    pub separation_bound: f64,
}

impl Default for LogitConfig {
    fn default() -> Self {
        LogitConfig {
            max_iter: 100,
            tol: 1e-8,
            separation_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStat {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CoefficientStat {
    pub fn wald(name: &str, coef: f64, std_err: f64) -> Self {
        let z = coef / std_err;
        CoefficientStat {
            name: name.to_string(),
            coef,
            std_err,
            z,
            p_value: two_sided_p(z),
            ci_low: coef - Z_95 * std_err,
            ci_high: coef + Z_95 * std_err,
        }
    }
}

/// Two-sided normal tail probability `P(|Z| > |z|)`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Intercept row first (named "constant"), then features in order.
    pub coefficients: Vec<CoefficientStat>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    /// Log-likelihood at the start and after every accepted step.
    pub log_likelihood_trace: Vec<f64>,
    pub max_abs_gradient: f64,
}

impl FitDiagnostics {
    /// Coefficient table with columns `name, coef, std_err, z, p, ci_low, ci_high`,
    /// features first and the constant last.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tcoef\tstd_err\tz\tp_value\tci_low\tci_high\n");
        let mut rows: Vec<&CoefficientStat> = self.coefficients.iter().skip(1).collect();
        rows.extend(self.coefficients.first());
        for r in rows {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\n",
                r.name, r.coef, r.std_err, r.z, r.p_value, r.ci_low, r.ci_high
            ));
        }
        out
    }
}

/// Design matrix (with a leading intercept column) and 0/1 response.
#[derive(Debug, Clone)]
pub struct LogitProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl LogitProblem {
    pub fn new(rows: &[Vec<f64>], y: &[f64]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let x = DMatrix::from_fn(rows.len(), p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        LogitProblem {
            x,
            y: DVector::from_column_slice(y),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        let z = &self.x * beta;
        z.iter()
            .zip(self.y.iter())
            .map(|(&z, &y)| y * z - softplus(z))
            .sum()
    }

    /// Score vector `Xᵀ(y − p)`.
    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let z = &self.x * beta;
        let resid = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.y.iter()).map(|(&z, &y)| y - sigmoid(z)),
        );
        self.x.tr_mul(&resid)
    }

    /// Observed (= expected) Fisher information `Xᵀ W X`.
    pub fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let z = &self.x * beta;
        let d = self.dim();
        let mut info = DMatrix::zeros(d, d);
        for (i, &zi) in z.iter().enumerate() {
            let p = sigmoid(zi);
            let w = p * (1.0 - p);
            let row = self.x.row(i);
            for a in 0..d {
                let wa = w * row[a];
                for b in a..d {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        info
    }
}

pub struct LogitFit {
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub trace: Vec<f64>,
    pub max_abs_gradient: f64,
}

/// The information matrix lost definiteness. At the start that is
/// collinearity; later, with fitted probabilities pinned to their labels, the
/// iterations were diverging along a (quasi-)separating direction.
fn separation_or_singular(problem: &LogitProblem, beta: &DVector<f64>, cfg: &LogitConfig) -> Error {
    let eta = &problem.x * beta;
    let saturated = eta
        .iter()
        .zip(problem.y.iter())
        .any(|(&e, &y)| (sigmoid(e) - y).abs() < 1e-12);
    if saturated {
        Error::PerfectSeparation {
            norm: beta.norm(),
            bound: cfg.separation_bound,
        }
    } else {
        Error::Singular
    }
}

/// Safeguarded Newton iterations from β = 0.
pub fn newton(problem: &LogitProblem, cfg: &LogitConfig) -> Result<LogitFit> {
    let d = problem.dim();
    let mut beta = DVector::zeros(d);
    let mut ll = problem.log_likelihood(&beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut grad = problem.gradient(&beta);

    while iterations < cfg.max_iter {
        let info = problem.information(&beta);
        let Some(chol) = info.cholesky() else {
            return Err(separation_or_singular(problem, &beta, cfg));
        };
        let delta = chol.solve(&grad);
        // Under separation the gradient vanishes while Newton steps stay
        // near unit length, so convergence is judged on the step.
        if delta.amax() < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &beta + &delta * step;
            let cand_ll = problem.log_likelihood(&candidate);
            if cand_ll >= ll {
                accepted = Some((candidate, cand_ll));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            // No ascent along the Newton direction: numerically at the optimum.
            converged = grad.amax() < cfg.tol.sqrt();
            break;
        };
        let step_norm = (&delta * step).norm();
        beta = next;
        ll = next_ll;
        trace.push(ll);
        grad = problem.gradient(&beta);

        let norm = beta.norm();
        if norm > cfg.separation_bound {
            return Err(Error::PerfectSeparation {
                norm,
                bound: cfg.separation_bound,
            });
        }
        if step_norm < cfg.tol {
            converged = true;
            break;
        }
    }

    let info = problem.information(&beta);
    let covariance = match info.cholesky() {
        Some(c) => c.inverse(),
        None => return Err(separation_or_singular(problem, &beta, cfg)),
    };
    Ok(LogitFit {
        max_abs_gradient: grad.amax(),
        beta,
        covariance,
        iterations,
        converged,
        log_likelihood: ll,
        trace,
    })
}

/// Fit on a binary-labeled cohort. Numerical columns are z-scored (sample
/// standard deviation); categorical codes enter unchanged.
pub fn fit_logit(c: &Cohort, cfg: &LogitConfig) -> Result<(LogitModel, FitDiagnostics)> {
    let labels = c.require_labels()?;
    if labels.kind != LabelKind::Binary {
        return Err(Error::InvalidInput("logistic fit needs binary labels; relabel first".into()));
    }
    let n = c.n_rows();
    let p = c.n_cols();
    if n <= p {
        return Err(Error::InvalidInput(format!("{n} rows for {p} features")));
    }
    let positives = labels.values.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::InvalidInput("both classes must be present".into()));
    }

    let standardization: Vec<Option<Standardizer>> = c
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            (f.kind == FeatureKind::Numerical).then(|| {
                let col = c.column(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let sd = var.sqrt();
                Standardizer {
                    mean,
                    scale: if sd > 0.0 { sd } else { 1.0 },
                }
            })
        })
        .collect();

    let mut model = LogitModel {
        feature_names: c.schema().names().iter().map(|s| s.to_string()).collect(),
        coefficients: vec![0.0; p + 1],
        standardization,
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| model.transform(c.row(i))).collect();
    let y: Vec<f64> = labels.values.iter().map(|&v| v as f64).collect();
    let problem = LogitProblem::new(&rows, &y);
    let fit = newton(&problem, cfg)?;

    model.coefficients = fit.beta.iter().copied().collect();
    let mut stats = Vec::with_capacity(p + 1);
    for k in 0..=p {
        let name = if k == 0 { "constant" } else { model.feature_names[k - 1].as_str() };
        let se = fit.covariance[(k, k)].sqrt();
        stats.push(CoefficientStat::wald(name, fit.beta[k], se));
    }
    let diagnostics = FitDiagnostics {
        coefficients: stats,
        iterations: fit.iterations,
        converged: fit.converged,
        log_likelihood: fit.log_likelihood,
        log_likelihood_trace: fit.trace,
        max_abs_gradient: fit.max_abs_gradient,
    };
    Ok((model, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FeatureSchema, FeatureSpec};

    #[test]
    fn zero_coefficients_give_one_half() {
        let m = LogitModel {
            feature_names: vec!["a".into(), "b".into()],
            coefficients: vec![0.0; 3],
            standardization: vec![None, None],
        };
        assert_eq!(m.predict_proba(&[3.0, -7.0]), 0.5);
    }

    #[test]
    fn one_scale_unit_above_mean() {
        let m = LogitModel {
            feature_names: vec!["Age".into()],
            coefficients: vec![0.0, 1.0],
            standardization: vec![Some(Standardizer { mean: 50.0, scale: 10.0 })],
        };
        assert!((m.predict_proba(&[60.0]) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_prediction() {
        let m = LogitModel {
            feature_names: vec!["Age".into(), "Smoking".into()],
            coefficients: vec![-0.5, 0.8, 1.2],
            standardization: vec![Some(Standardizer { mean: 55.0, scale: 8.0 }), None],
        };
        // z = -0.5 + 0.8 * (67 - 55) / 8 + 1.2 * 1 = -0.5 + 1.2 + 1.2 = 1.9
        let expected = 1.0 / (1.0 + (-1.9f64).exp());
        assert!((m.predict_proba(&[67.0, 1.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert_eq!(softplus(800.0), 800.0);
    }

    fn labeled(kind: LabelKind, values: Vec<u32>) -> Cohort {
        let schema = FeatureSchema::new(vec![FeatureSpec::numerical("x", None, None)]).unwrap();
        let rows = values.iter().map(|_| vec![0.0]).collect();
        Cohort::new(schema, rows, Some(Labels::new(kind, values).unwrap())).unwrap()
    }

    #[test]
    fn relabeling_rules() {
        let c = relabel_binary(&labeled(LabelKind::Risk, vec![0, 1, 2])).unwrap();
        assert_eq!(c.labels().unwrap().values, vec![0, 0, 1]);
        let c = relabel_binary(&labeled(LabelKind::RiskOrStroke, vec![3, 1])).unwrap();
        assert_eq!(c.labels().unwrap().values, vec![1, 0]);
        let schema = FeatureSchema::new(vec![FeatureSpec::numerical("x", None, None)]).unwrap();
        let empty = Cohort::new(schema.clone(), vec![], None).unwrap();
        assert_eq!(relabel_binary(&empty).unwrap().n_rows(), 0);
        let unlabeled = Cohort::new(schema, vec![vec![1.0]], None).unwrap();
        assert!(matches!(relabel_binary(&unlabeled), Err(Error::Unlabeled)));
    }

    fn selection_cohort() -> Cohort {
        let schema = FeatureSchema::new(vec![
            FeatureSpec::numerical(col::BMI, None, None),
            FeatureSpec::numerical(col::HEIGHT, None, None),
            FeatureSpec::numerical(col::WEIGHT, None, None),
            FeatureSpec::categorical(col::ETHNICITY, 2),
            FeatureSpec::numerical("Const", None, None),
            FeatureSpec::numerical("Age", None, None),
        ])
        .unwrap();
        let rows = (0..20)
            .map(|i| {
                let i = i as f64;
                vec![20.0 + i, 160.0 + i, 60.0 + i, 0.0, 5.0, 40.0 + 2.0 * i]
            })
            .collect();
        Cohort::new(schema, rows, None).unwrap()
    }

    #[test]
    fn default_rules_keep_bmi() {
        let (c, rep) = select_features(&selection_cohort(), &SelectionConfig::default()).unwrap();
        assert_eq!(c.schema().names(), vec![col::BMI, "Age"]);
        assert_eq!(rep.dropped_by_rule, vec![col::HEIGHT, col::WEIGHT, col::ETHNICITY]);
        assert_eq!(rep.dropped_by_variance.len(), 1);
        assert_eq!(rep.dropped_by_variance[0].0, "Const");
    }

    #[test]
    fn zero_threshold_applies_only_rules() {
        let cfg = SelectionConfig {
            variance_threshold: 0.0,
            rules: default_selection_rules(),
        };
        let (c, rep) = select_features(&selection_cohort(), &cfg).unwrap();
        assert_eq!(c.schema().names(), vec![col::BMI, "Const", "Age"]);
        assert!(rep.dropped_by_variance.is_empty());
    }

    #[test]
    fn unknown_rule_column_is_an_error() {
        let cfg = SelectionConfig {
            variance_threshold: 0.0,
            rules: vec![SelectionRule {
                keep: None,
                drop: vec!["Shoe".into()],
            }],
        };
        assert!(matches!(
            select_features(&selection_cohort(), &cfg),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn separation_is_reported() {
        let schema = FeatureSchema::new(vec![FeatureSpec::categorical("x", 2)]).unwrap();
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64]).collect();
        let y = (0..20).map(|i| (i % 2) as u32).collect();
        let c = Cohort::new(schema, rows, Some(Labels::new(LabelKind::Binary, y).unwrap())).unwrap();
        assert!(matches!(
            fit_logit(&c, &LogitConfig::default()),
            Err(Error::PerfectSeparation { .. })
        ));
    }

    #[test]
    fn wald_row_arithmetic() {
        let r = CoefficientStat::wald("HistoryOfStroke", 2.6779, 0.247);
        assert!((r.ci_low - 2.19378).abs() < 1e-9);
        assert!((r.ci_high - 3.16202).abs() < 1e-9);
        assert!(r.p_value < 1e-20);
        assert!((two_sided_p(1.96) - 0.05).abs() < 1e-3);
        assert_eq!(two_sided_p(0.0), 1.0);
    }
}
