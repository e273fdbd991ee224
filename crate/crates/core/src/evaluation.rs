//! Classification reports, per-risk-level probability summaries, the
//! missing-value sweep and recursive feature elimination.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, LabelKind, MISSING};
use crate::error::{Error, Result};
use crate::logit::{LogitModel, Z_95};
use crate::model::{Classifier, ModelSpec};
use crate::rng::{derive_seed, derive_seed2, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: usize,
    /// `confusion[t][p]` counts rows of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One-vs-rest precision, recall and F1 per class. Undefined ratios (class
/// never predicted, or absent from `y_true`) are reported as 0 with a warning.
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: &[String],
) -> Result<ClassificationReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} labels, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let k = class_names.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::InvalidInput(format!("class index out of range ({t}, {p})")));
        }
        confusion[t][p] += 1;
    }
    let total = y_true.len();
    let mut warnings = Vec::new();
    let mut classes = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion[c][c];
        let predicted: usize = (0..k).map(|t| confusion[t][c]).sum();
        let support: usize = confusion[c].iter().sum();
        let precision = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            warnings.push(format!("precision of {} undefined (never predicted); set to 0", class_names[c]));
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            warnings.push(format!("recall of {} undefined (no true samples); set to 0", class_names[c]));
            0.0
        };
        classes.push(ClassMetrics {
            name: class_names[c].clone(),
            precision,
            recall,
            f1: f1(precision, recall),
            support,
        });
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let kf = k as f64;
    let macro_avg = Averages {
        precision: classes.iter().map(|c| c.precision).sum::<f64>() / kf,
        recall: classes.iter().map(|c| c.recall).sum::<f64>() / kf,
        f1: classes.iter().map(|c| c.f1).sum::<f64>() / kf,
    };
    let weighted = |m: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| c.support as f64 * m(c)).sum::<f64>() / total as f64
    };
    let weighted_avg = Averages {
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
    };
    Ok(ClassificationReport {
        classes,
        accuracy: correct as f64 / total as f64,
        macro_avg,
        weighted_avg,
        total,
        confusion,
        warnings,
    })
}

impl ClassificationReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\tprecision\trecall\tf1\tsupport\n");
        for c in &self.classes {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
                c.name, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push_str(&format!("accuracy\t\t\t{:.4}\t{}\n", self.accuracy, self.total));
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            out.push_str(&format!(
                "{name}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
                a.precision, a.recall, a.f1, self.total
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    #[default]
    WeightedPrecision,
}

/// Score predictions with a metric. Weighted precision needs at least two
/// classes present in `y_true`.
pub fn score(metric: Metric, y_true: &[u32], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    let truth: Vec<usize> = y_true.iter().map(|&v| v as usize).collect();
    match metric {
        Metric::Accuracy => {
            if truth.is_empty() {
                return Err(Error::MetricUndefined("accuracy of zero samples".into()));
            }
            let correct = truth.iter().zip(y_pred).filter(|(a, b)| a == b).count();
            Ok(correct as f64 / truth.len() as f64)
        }
        Metric::WeightedPrecision => {
            let mut present = vec![false; n_classes];
            for &t in &truth {
                if t < n_classes {
                    present[t] = true;
                }
            }
            if present.iter().filter(|&&p| p).count() < 2 {
                return Err(Error::MetricUndefined(
                    "weighted precision needs at least two classes".into(),
                ));
            }
            let names: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
            Ok(classification_report(&truth, y_pred, &names)?.weighted_avg.precision)
        }
    }
}

/// Evaluate a classifier on a labeled cohort.
pub fn evaluate<M: Classifier + ?Sized>(model: &M, data: &Cohort) -> Result<ClassificationReport> {
    let labels = data.require_labels()?;
    if model.n_classes() != labels.n_classes() {
        return Err(Error::InvalidInput(format!(
            "model predicts {} classes, labels have {}",
            model.n_classes(),
            labels.n_classes()
        )));
    }
    let truth: Vec<usize> = labels.values.iter().map(|&v| v as usize).collect();
    classification_report(&truth, &model.predict_cohort(data), &labels.kind.class_names())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProbability {
    pub level: String,
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean predicted probability per risk level with a normal-approximation
/// 95% interval `mean ± 1.96 · sd / √n`.
pub fn risk_group_probability(model: &LogitModel, test: &Cohort) -> Result<Vec<GroupProbability>> {
    let labels = test.require_labels()?;
    if labels.kind == LabelKind::Binary {
        return Err(Error::InvalidInput("risk levels required, found binary labels".into()));
    }
    let names = labels.kind.class_names();
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, &y) in labels.values.iter().enumerate() {
        groups[y as usize].push(model.predict_proba(test.row(i)));
    }
    groups
        .iter()
        .zip(names)
        .map(|(ps, level)| {
            if ps.is_empty() {
                return Err(Error::InvalidInput(format!("risk level {level} has no rows")));
            }
            let n = ps.len() as f64;
            let mean = ps.iter().sum::<f64>() / n;
            let sd = if ps.len() > 1 {
                (ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = Z_95 * sd / n.sqrt();
            Ok(GroupProbability {
                level,
                n: ps.len(),
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
            })
        })
        .collect()
}

pub fn group_probability_tsv(groups: &[GroupProbability]) -> String {
    let mut out = String::from("level\tn\tmean\tci_low\tci_high\n");
    for g in groups {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
            g.level, g.n, g.mean, g.ci_low, g.ci_high
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Features to corrupt; empty means every feature of the trained model.
    pub features: Vec<String>,
    /// Missing proportions in `[0, 1]`, strictly increasing; 0 is a control point.
    pub proportions: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    /// Columns removed before training (one side of strongly correlated pairs).
    pub drop_features: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            features: Vec::new(),
            proportions: (1..=9).map(|k| k as f64 / 10.0).collect(),
            repetitions: 100,
            seed: 0,
            drop_features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub proportion: f64,
    pub mean: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub feature: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Weighted precision on the uncorrupted test set.
    pub baseline: f64,
    pub repetitions: usize,
    pub curves: Vec<SweepCurve>,
}

impl SweepResult {
    pub fn curve(&self, feature: &str) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.feature == feature)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature\tproportion\tmean\tband_low\tband_high\n");
        for c in &self.curves {
            for p in &c.points {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    c.feature, p.proportion, p.mean, p.band_low, p.band_high
                ));
            }
        }
        out
    }
}

fn mean_band(scores: &[f64]) -> (f64, f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let half = Z_95 * sd / n.sqrt();
    (mean, mean - half, mean + half)
}

/// Train once on `train` (minus `drop_features`), then for each feature and
/// proportion set that share of randomly chosen test cells to MISSING,
/// `repetitions` times, and record weighted precision.
pub fn missing_sweep(spec: &ModelSpec, train: &Cohort, test: &Cohort, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.repetitions < 2 {
        return Err(Error::InvalidInput("sweep needs at least 2 repetitions".into()));
    }
    if cfg.proportions.is_empty()
        || cfg.proportions.iter().any(|p| !(0.0..=1.0).contains(p))
        || cfg.proportions.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidInput(
            "proportions must be strictly increasing within [0, 1]".into(),
        ));
    }
    let drop: Vec<&str> = cfg.drop_features.iter().map(String::as_str).collect();
    let train = train.drop_named(&drop)?;
    let test = test.drop_named(&drop)?;
    let features: Vec<usize> = if cfg.features.is_empty() {
        (0..train.n_cols()).collect()
    } else {
        cfg.features
            .iter()
            .map(|f| train.schema().index_of(f).ok_or_else(|| Error::UnknownColumn(f.clone())))
            .collect::<Result<_>>()?
    };
    let model = spec.fit(&train)?;
    let labels = test.require_labels()?;
    let k = labels.n_classes();
    let base_preds = model.predict_cohort(&test);
    let baseline = score(Metric::WeightedPrecision, &labels.values, &base_preds, k)?;
    let n = test.n_rows();

    let jobs: Vec<(usize, usize, usize)> = features
        .iter()
        .enumerate()
        .flat_map(|(fi, _)| {
            (0..cfg.proportions.len())
                .flat_map(move |pi| (0..cfg.repetitions).map(move |r| (fi, pi, r)))
        })
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(fi, pi, r)| {
            let col = features[fi];
            let count = (cfg.proportions[pi] * n as f64).round() as usize;
            let seed = derive_seed(derive_seed2(cfg.seed, col as u64, pi as u64), r as u64);
            let rows = index::sample(&mut rng_from_seed(seed), n, count.min(n));
            let mut preds = base_preds.clone();
            let mut row = vec![0.0; test.n_cols()];
            for i in rows.iter() {
                row.copy_from_slice(test.row(i));
                row[col] = MISSING;
                preds[i] = model.predict(&row);
            }
            score(Metric::WeightedPrecision, &labels.values, &preds, k)
        })
        .collect::<Result<_>>()?;

    let per_curve = cfg.proportions.len() * cfg.repetitions;
    let curves = features
        .iter()
        .enumerate()
        .map(|(fi, &col)| SweepCurve {
            feature: train.schema().features[col].name.clone(),
            points: cfg
                .proportions
                .iter()
                .enumerate()
                .map(|(pi, &proportion)| {
                    let start = fi * per_curve + pi * cfg.repetitions;
                    let s = scores[start..start + cfg.repetitions].to_vec();
                    let (mean, band_low, band_high) = mean_band(&s);
                    SweepPoint {
                        proportion,
                        mean,
                        band_low,
                        band_high,
                        scores: s,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(SweepResult {
        baseline,
        repetitions: cfg.repetitions,
        curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    pub features: Vec<String>,
    /// Normalized MDI of `features` at this step.
    pub importances: Vec<f64>,
    /// Test precision per class.
    pub precision: Vec<f64>,
    /// Feature removed after this step; `None` at the final step.
    pub removed: Option<String>,
}

impl RfeStep {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn mean_precision(&self) -> f64 {
        self.precision.iter().sum::<f64>() / self.precision.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeTrace {
    pub class_names: Vec<String>,
    pub steps: Vec<RfeStep>,
}

impl RfeTrace {
    /// Fewest features whose mean class precision is within `tolerance` of
    /// the best mean precision along the trace.
    pub fn plateau_features(&self, tolerance: f64) -> usize {
        let best = self
            .steps
            .iter()
            .map(RfeStep::mean_precision)
            .fold(f64::NEG_INFINITY, f64::max);
        self.steps
            .iter()
            .filter(|s| s.mean_precision() >= best - tolerance)
            .map(RfeStep::n_features)
            .min()
            .unwrap_or(0)
    }

    /// Order in which features were removed.
    pub fn removal_order(&self) -> Vec<&str> {
        self.steps.iter().filter_map(|s| s.removed.as_deref()).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("n_features\tremoved");
        for c in &self.class_names {
            out.push_str(&format!("\tprecision_{c}"));
        }
        out.push('\n');
        for s in &self.steps {
            out.push_str(&format!("{}\t{}", s.n_features(), s.removed.as_deref().unwrap_or("")));
            for p in &s.precision {
                out.push_str(&format!("\t{p}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Least important feature by MDI; ties go to the lowest index.
fn least_important(importances: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in importances.iter().enumerate() {
        if v < importances[best] {
            best = i;
        }
    }
    best
}

/// Recursive feature elimination: fit, rank by MDI, drop the least important
/// feature, repeat until `target_n` features remain. Precision is measured on
/// `test` at every step.
pub fn rfe(spec: &ModelSpec, train: &Cohort, test: &Cohort, target_n: usize) -> Result<RfeTrace> {
    if target_n == 0 || target_n >= train.n_cols() {
        return Err(Error::InvalidInput(format!(
            "target_n must be in 1..{}",
            train.n_cols()
        )));
    }
    let class_names = train.require_labels()?.kind.class_names();
    let mut cols: Vec<usize> = (0..train.n_cols()).collect();
    let mut steps = Vec::new();
    loop {
        let tr = train.select_columns(&cols);
        let te = test.select_columns(&cols);
        let model = spec.fit(&tr)?;
        let importances = model
            .mdi_importance()
            .ok_or_else(|| Error::Model("RFE needs a tree or forest model".into()))?;
        let report = evaluate(&model, &te)?;
        let features: Vec<String> = tr.schema().names().iter().map(|s| s.to_string()).collect();
        let done = cols.len() == target_n;
        let removed = (!done).then(|| least_important(&importances));
        steps.push(RfeStep {
            removed: removed.map(|r| features[r].clone()),
            features,
            importances,
            precision: report.classes.iter().map(|c| c.precision).collect(),
        });
        match removed {
            Some(r) => {
                cols.remove(r);
            }
            None => break,
        }
    }
    Ok(RfeTrace { class_names, steps })
}
