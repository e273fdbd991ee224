//! Model explanations: permutation importance, exact Shapley values under an
//! interventional value function, path-dependent TreeSHAP, and the
//! summary / dependence exports.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::evaluation::{score, Metric};
use crate::model::{Classifier, Model};
use crate::rng::{derive_seed2, rng_from_seed};
use crate::tree::{ForestModel, TreeModel};

/// Largest feature count accepted by [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 20;
/// Logistic models wider than this are explained by [`sampled_shapley`].
pub const LOGIT_EXACT_FEATURES: usize = 12;
pub const LOGIT_PERMUTATIONS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Predicted probability of the given class.
    Probability { class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub base_value: f64,
    pub contributions: Vec<f64>,
    /// Model output on the explained row.
    pub output: f64,
    pub output_kind: OutputKind,
}

impl Explanation {
    /// `|base + Σφ − output|`.
    pub fn local_accuracy_error(&self) -> f64 {
        (self.base_value + self.contributions.iter().sum::<f64>() - self.output).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePermutation {
    pub feature: String,
    pub importance: f64,
    /// Score after each shuffle, `s_{i,j}`.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub metric: Metric,
    pub baseline: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub features: Vec<FeaturePermutation>,
}

/// `s - (1/K) Σ_j s_{i,j}`.
pub fn permutation_formula(baseline: f64, scores: &[f64]) -> f64 {
    baseline - scores.iter().sum::<f64>() / scores.len() as f64
}

impl PermutationReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature\timportance");
        for j in 0..self.repetitions {
            out.push_str(&format!("\tscore_{j}"));
        }
        out.push('\n');
        for f in &self.features {
            out.push_str(&format!("{}\t{}", f.feature, f.importance));
            for s in &f.scores {
                out.push_str(&format!("\t{s}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Shuffle each column `repetitions` times and measure the score drop.
/// Permutation `(i, j)` is drawn from `splitmix64`-derived seed `(seed, i, j)`.
pub fn permutation_importance<M: Classifier + ?Sized>(
    model: &M,
    data: &Cohort,
    metric: Metric,
    repetitions: usize,
    seed: u64,
) -> Result<PermutationReport> {
    if repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be at least 1".into()));
    }
    let labels = data.require_labels()?;
    let n = data.n_rows();
    let predictions = model.predict_cohort(data);
    let baseline = score(metric, &labels.values, &predictions, labels.n_classes())?;

    let features: Vec<FeaturePermutation> = (0..data.n_cols())
        .into_par_iter()
        .map(|i| {
            let column = data.column(i);
            let mut row = vec![0.0; data.n_cols()];
            let scores = (0..repetitions)
                .map(|j| {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng_from_seed(derive_seed2(seed, i as u64, j as u64)));
                    let preds: Vec<usize> = (0..n)
                        .map(|r| {
                            row.copy_from_slice(data.row(r));
                            row[i] = column[perm[r]];
                            model.predict(&row)
                        })
                        .collect();
                    score(metric, &labels.values, &preds, labels.n_classes())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(FeaturePermutation {
                feature: data.schema().features[i].name.clone(),
                importance: permutation_formula(baseline, &scores),
                scores,
            })
        })
        .collect::<Result<_>>()?;

    Ok(PermutationReport {
        metric,
        baseline,
        repetitions,
        seed,
        features,
    })
}

/// Shapley weight `s! (n - s - 1)! / n!` for every coalition size `s < n`.
fn shapley_weights(n: usize) -> Vec<f64> {
    // w(0) = 1/n, w(s+1) = w(s) * (s+1) / (n-s-1)
    let mut w = Vec::with_capacity(n);
    let mut cur = 1.0 / n as f64;
    for s in 0..n {
        w.push(cur);
        if s + 1 < n {
            cur *= (s + 1) as f64 / (n - s - 1) as f64;
        }
    }
    w
}

/// Shapley values by full enumeration of a set function over `n` players.
/// Bit `i` of the mask marks player `i` as present. Returns `(v(∅), φ)`.
pub fn shapley_from_value_fn<F>(n: usize, v: F) -> (f64, Vec<f64>)
where
    F: Fn(u32) -> f64 + Sync,
{
    let values: Vec<f64> = (0..1u32 << n).into_par_iter().map(&v).collect();
    let weights = shapley_weights(n);
    let phi = (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << n)
                .filter(|m| m & bit == 0)
                .map(|m| weights[m.count_ones() as usize] * (values[(m | bit) as usize] - values[m as usize]))
                .sum()
        })
        .collect();
    (values[0], phi)
}

/// Exact Shapley values with the interventional value function
/// `v(S) = mean_b f(x_S, b_{F∖S})[target]` over the background rows.
pub fn exact_shapley<M: Classifier + ?Sized>(
    model: &M,
    row: &[f64],
    background: &Cohort,
    target_class: usize,
) -> Result<Explanation> {
    let n = row.len();
    if n > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures(n));
    }
    if background.n_rows() == 0 {
        return Err(Error::InvalidInput("empty background sample".into()));
    }
    if background.n_cols() != n || model.n_features() != n {
        return Err(Error::InvalidInput("feature count mismatch".into()));
    }
    if target_class >= model.n_classes() {
        return Err(Error::InvalidInput(format!("no class {target_class}")));
    }
    let nb = background.n_rows() as f64;
    let (base_value, contributions) = shapley_from_value_fn(n, |mask| {
        let mut hybrid = vec![0.0; n];
        let mut total = 0.0;
        for b in background.rows().take(background.n_rows()) {
            for j in 0..n {
                hybrid[j] = if mask & (1 << j) != 0 { row[j] } else { b[j] };
            }
            total += model.predict_proba(&hybrid)[target_class];
        }
        total / nb
    });
    Ok(Explanation {
        base_value,
        contributions,
        output: model.predict_proba(row)[target_class],
        output_kind: OutputKind::Probability { class: target_class },
    })
}

/// Monte Carlo Shapley values for wide models: `permutations` random
/// feature orders (each paired with its reverse) under the same
/// interventional value function as [`exact_shapley`]. Every order telescopes
/// to `v(F) - v(∅)`, so local accuracy holds exactly up to rounding.
pub fn sampled_shapley<M: Classifier + ?Sized>(
    model: &M,
    row: &[f64],
    background: &Cohort,
    target_class: usize,
    permutations: usize,
    seed: u64,
) -> Result<Explanation> {
    let n = row.len();
    if background.n_rows() == 0 || permutations == 0 {
        return Err(Error::InvalidInput("empty background sample or no permutations".into()));
    }
    if background.n_cols() != n || model.n_features() != n {
        return Err(Error::InvalidInput("feature count mismatch".into()));
    }
    if target_class >= model.n_classes() {
        return Err(Error::InvalidInput(format!("no class {target_class}")));
    }
    let nb = background.n_rows() as f64;
    let per_order: Vec<Vec<f64>> = (0..permutations)
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(derive_seed2(seed, p as u64, 0)));
            let reversed: Vec<usize> = order.iter().rev().copied().collect();
            [order, reversed]
        })
        .map(|order| {
            let mut phi = vec![0.0; n];
            let mut hybrids: Vec<Vec<f64>> = background.rows().take(background.n_rows()).map(<[f64]>::to_vec).collect();
            let value = |hs: &[Vec<f64>]| hs.iter().map(|h| model.predict_proba(h)[target_class]).sum::<f64>() / nb;
            let mut prev = value(&hybrids);
            for &j in &order {
                for h in hybrids.iter_mut() {
                    h[j] = row[j];
                }
                let cur = value(&hybrids);
                phi[j] = cur - prev;
                prev = cur;
            }
            phi
        })
        .collect();
    let m = per_order.len() as f64;
    let contributions = (0..n).map(|j| per_order.iter().map(|phi| phi[j]).sum::<f64>() / m).collect();
    let base_value = background
        .rows()
        .take(background.n_rows())
        .map(|b| model.predict_proba(b)[target_class])
        .sum::<f64>()
        / nb;
    Ok(Explanation {
        base_value,
        contributions,
        output: model.predict_proba(row)[target_class],
        output_kind: OutputKind::Probability { class: target_class },
    })
}

/// `E[f(x) | x_S]` under the tree's cover distribution: features in `mask`
/// follow the row's branch, others average both children by sample count.
pub fn tree_conditional_expectation(tree: &TreeModel, row: &[f64], mask: u64, class: usize) -> f64 {
    fn go(t: &TreeModel, j: usize, row: &[f64], mask: u64, class: usize) -> f64 {
        let node = &t.nodes[j];
        match &node.split {
            None => node.class_counts[class] as f64 / node.n_samples as f64,
            Some(s) => {
                let f = s.rule.feature;
                if f < 64 && mask & (1u64 << f) != 0 {
                    let v = if row[f].is_nan() { crate::cohort::MISSING } else { row[f] };
                    let next = if v <= s.rule.threshold { s.left } else { s.right };
                    go(t, next, row, mask, class)
                } else {
                    let (l, r) = (&t.nodes[s.left], &t.nodes[s.right]);
                    let n = node.n_samples as f64;
                    (l.n_samples as f64 * go(t, s.left, row, mask, class)
                        + r.n_samples as f64 * go(t, s.right, row, mask, class))
                        / n
                }
            }
        }
    }
    go(tree, 0, row, mask, class)
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (l + 1) as f64;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / (l + 1) as f64;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, i: usize) {
    let l = path.len() - 1;
    let one = path[i].one_fraction;
    let zero = path[i].zero_fraction;
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * (l + 1) as f64 / ((j + 1) as f64 * one);
            next = tmp - path[j].weight * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight of the path with element `i` removed.
fn unwound_sum(path: &[PathElement], i: usize) -> f64 {
    let l = path.len() - 1;
    let one = path[i].one_fraction;
    let zero = path[i].zero_fraction;
    let mut next = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = next * (l + 1) as f64 / ((j + 1) as f64 * one);
            total += tmp;
            next = path[j].weight - tmp * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            total += path[j].weight / zero / ((l - j) as f64 / (l + 1) as f64);
        }
    }
    total
}

struct ShapWalk<'a> {
    tree: &'a TreeModel,
    row: &'a [f64],
    class: usize,
    phi: Vec<f64>,
}

impl ShapWalk<'_> {
    fn recurse(
        &mut self,
        node: usize,
        mut path: Vec<PathElement>,
        zero: f64,
        one: f64,
        feature: Option<usize>,
    ) {
        extend_path(&mut path, zero, one, feature);
        let n = &self.tree.nodes[node];
        match &n.split {
            None => {
                let value = n.class_counts[self.class] as f64 / n.n_samples as f64;
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let el = path[i];
                    let f = el.feature.expect("only the root element has no feature");
                    self.phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
            Some(s) => {
                let f = s.rule.feature;
                let v = self.row[f];
                let v = if v.is_nan() { crate::cohort::MISSING } else { v };
                let (hot, cold) = if v <= s.rule.threshold {
                    (s.left, s.right)
                } else {
                    (s.right, s.left)
                };
                let mut incoming_zero = 1.0;
                let mut incoming_one = 1.0;
                if let Some(k) = path.iter().position(|e| e.feature == Some(f)) {
                    incoming_zero = path[k].zero_fraction;
                    incoming_one = path[k].one_fraction;
                    unwind_path(&mut path, k);
                }
                let cover = n.n_samples as f64;
                let hot_cover = self.tree.nodes[hot].n_samples as f64;
                let cold_cover = self.tree.nodes[cold].n_samples as f64;
                self.recurse(
                    hot,
                    path.clone(),
                    incoming_zero * hot_cover / cover,
                    incoming_one,
                    Some(f),
                );
                self.recurse(cold, path, incoming_zero * cold_cover / cover, 0.0, Some(f));
            }
        }
    }
}

/// Path-dependent TreeSHAP for one tree.
pub fn tree_shap_single(tree: &TreeModel, row: &[f64], target_class: usize) -> Result<Explanation> {
    if tree.nodes.is_empty() || tree.root().n_samples == 0 {
        return Err(Error::Model("tree has no node statistics".into()));
    }
    if target_class >= tree.n_classes {
        return Err(Error::InvalidInput(format!("no class {target_class}")));
    }
    if row.len() != tree.n_features {
        return Err(Error::InvalidInput("feature count mismatch".into()));
    }
    let mut walk = ShapWalk {
        tree,
        row,
        class: target_class,
        phi: vec![0.0; tree.n_features],
    };
    walk.recurse(0, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None);
    Ok(Explanation {
        base_value: tree_conditional_expectation(tree, row, 0, target_class),
        contributions: walk.phi,
        output: tree.predict_proba(row)[target_class],
        output_kind: OutputKind::Probability { class: target_class },
    })
}

/// Models made of trees whose SHAP values average over trees.
pub trait TreeEnsemble: Classifier {
    fn trees(&self) -> &[TreeModel];
}

impl TreeEnsemble for TreeModel {
    fn trees(&self) -> &[TreeModel] {
        std::slice::from_ref(self)
    }
}

impl TreeEnsemble for ForestModel {
    fn trees(&self) -> &[TreeModel] {
        &self.trees
    }
}

/// TreeSHAP explanation; for forests, the mean of per-tree explanations.
pub fn tree_shap<M: TreeEnsemble + ?Sized>(model: &M, row: &[f64], target_class: usize) -> Result<Explanation> {
    let trees = model.trees();
    if trees.is_empty() {
        return Err(Error::Model("no trees".into()));
    }
    let mut base = 0.0;
    let mut phi = vec![0.0; model.n_features()];
    for t in trees {
        let e = tree_shap_single(t, row, target_class)?;
        base += e.base_value;
        for (a, c) in phi.iter_mut().zip(e.contributions) {
            *a += c;
        }
    }
    let k = trees.len() as f64;
    phi.iter_mut().for_each(|x| *x /= k);
    Ok(Explanation {
        base_value: base / k,
        contributions: phi,
        output: model.predict_proba(row)[target_class],
        output_kind: OutputKind::Probability { class: target_class },
    })
}

/// TreeSHAP for tree models; interventional Shapley over a background sample
/// for logistic models, exact up to `LOGIT_EXACT_FEATURES` features and
/// sampled beyond.
pub fn explain_model(model: &Model, row: &[f64], target_class: usize, background: Option<&Cohort>) -> Result<Explanation> {
    match model {
        Model::Tree(t) => tree_shap(t, row, target_class),
        Model::Forest(f) => tree_shap(f, row, target_class),
        Model::Logit(l) => {
            let bg = background.ok_or_else(|| Error::InvalidInput("logistic explanations need a background sample".into()))?;
            if row.len() <= LOGIT_EXACT_FEATURES {
                exact_shapley(l, row, bg, target_class)
            } else {
                sampled_shapley(l, row, bg, target_class, LOGIT_PERMUTATIONS, 0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRecord {
    pub feature: String,
    pub row: usize,
    pub shap_value: f64,
    pub feature_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub records: Vec<ShapRecord>,
    /// `(feature, mean |shap|)`, descending; ties by feature index.
    pub ranking: Vec<(String, f64)>,
}

impl ShapSummary {
    pub fn records_tsv(&self) -> String {
        let mut out = String::from("feature\trow\tshap_value\tfeature_value\n");
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.feature, r.row, r.shap_value, r.feature_value));
        }
        out
    }

    pub fn ranking_tsv(&self) -> String {
        let mut out = String::from("feature\tmean_abs_shap\n");
        for (f, v) in &self.ranking {
            out.push_str(&format!("{f}\t{v}\n"));
        }
        out
    }
}

fn explain_rows<M: TreeEnsemble + ?Sized>(model: &M, data: &Cohort, target_class: usize) -> Result<Vec<Explanation>> {
    (0..data.n_rows())
        .into_par_iter()
        .map(|i| tree_shap(model, data.row(i), target_class))
        .collect()
}

/// One record per (row, feature), row-major, plus the mean-|SHAP| ranking.
pub fn shap_summary_export<M: TreeEnsemble + ?Sized>(model: &M, data: &Cohort, target_class: usize) -> Result<ShapSummary> {
    let explanations = explain_rows(model, data, target_class)?;
    let names = data.schema().names();
    let mut records = Vec::with_capacity(data.n_rows() * data.n_cols());
    let mut mean_abs = vec![0.0; data.n_cols()];
    for (i, e) in explanations.iter().enumerate() {
        for (j, &phi) in e.contributions.iter().enumerate() {
            mean_abs[j] += phi.abs();
            records.push(ShapRecord {
                feature: names[j].to_string(),
                row: i,
                shap_value: phi,
                feature_value: data.value(i, j),
            });
        }
    }
    let n = data.n_rows().max(1) as f64;
    let mut order: Vec<usize> = (0..data.n_cols()).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    let ranking = order
        .into_iter()
        .map(|j| (names[j].to_string(), mean_abs[j] / n))
        .collect();
    Ok(ShapSummary { records, ranking })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    pub value_a: f64,
    pub shap_a: f64,
    pub value_b: f64,
}

/// Per-row `(value_a, shap_a, value_b)` for dependence plots.
pub fn shap_dependence_export<M: TreeEnsemble + ?Sized>(
    model: &M,
    data: &Cohort,
    feature_a: &str,
    feature_b: &str,
    target_class: usize,
) -> Result<Vec<DependencePoint>> {
    let a = data.schema().index_of(feature_a).ok_or_else(|| Error::UnknownColumn(feature_a.into()))?;
    let b = data.schema().index_of(feature_b).ok_or_else(|| Error::UnknownColumn(feature_b.into()))?;
    let explanations = explain_rows(model, data, target_class)?;
    Ok(explanations
        .iter()
        .enumerate()
        .map(|(i, e)| DependencePoint {
            value_a: data.value(i, a),
            shap_a: e.contributions[a],
            value_b: data.value(i, b),
        })
        .collect())
}

pub fn dependence_tsv(points: &[DependencePoint], feature_a: &str, feature_b: &str) -> String {
    let mut out = format!("{feature_a}\tshap_{feature_a}\t{feature_b}\n");
    for p in points {
        out.push_str(&format!("{}\t{}\t{}\n", p.value_a, p.shap_a, p.value_b));
    }
    out
}
