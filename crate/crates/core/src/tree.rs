//! CART classification trees, bootstrap random forests and mean decrease in
//! impurity (MDI) importance.
//!
//! Splits send `value <= threshold` left. Candidate thresholds are midpoints
//! between consecutive distinct values of the node's samples. Ties between
//! equally good splits go to the lowest feature index, then the lowest
//! threshold. Gini comparisons are done in exact integer arithmetic so the
//! tie-breaking never depends on floating-point rounding.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, MISSING};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    /// Information gain (Shannon entropy, natural log).
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Minimum `p(j) * Δi` a split must achieve.
    pub min_impurity_decrease: f64,
    pub n_trees: usize,
    /// Candidate features per split in forests; `None` means `ceil(sqrt(n_features))`.
    pub feature_subsample_size: Option<usize>,
    pub seed: u64,
    pub criterion: Criterion,
    /// Forest trees train on bootstrap resamples; disabling this is a test hook.
    pub bootstrap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_depth: 12,
            min_samples_split: 2,
            min_samples_leaf: 1,
            min_impurity_decrease: 0.0,
            n_trees: 100,
            feature_subsample_size: None,
            seed: 0,
            criterion: Criterion::Gini,
            bootstrap: true,
        }
    }
}

impl TrainConfig {
    pub fn subsample_size(&self, n_features: usize) -> usize {
        self.feature_subsample_size
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return bad("min_impurity_decrease must be non-negative");
        }
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        let m = self.subsample_size(n_features);
        if m == 0 || m > n_features {
            return bad("feature_subsample_size must be in 1..=n_features");
        }
        Ok(())
    }
}

/// Impurity of a class-count vector.
pub fn impurity(criterion: Criterion, counts: &[u64]) -> Result<f64> {
    match criterion {
        Criterion::Gini => gini(counts),
        Criterion::Entropy => entropy(counts),
    }
}

pub fn gini(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let t = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

pub fn entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let t = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.ln()
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub rule: SplitRule,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub n_samples: u64,
    pub class_counts: Vec<u64>,
    pub impurity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        self.class_counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// A fitted tree stored as a node arena; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub n_features: usize,
    pub config: TrainConfig,
}

impl TreeModel {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Index of the leaf a row lands in.
    pub fn apply(&self, row: &[f64]) -> usize {
        let mut idx = 0;
        while let Some(split) = &self.nodes[idx].split {
            let v = row[split.rule.feature];
            let v = if v.is_nan() { MISSING } else { v };
            idx = if v <= split.rule.threshold { split.left } else { split.right };
        }
        idx
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        self.nodes[self.apply(row)].probabilities()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &TreeModel, i: usize) -> usize {
            match &t.nodes[i].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Unnormalized `Σ_j p(j) Δi(s_j, j)` per feature.
    pub fn raw_impurity_decrease(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        let total = self.root().n_samples as f64;
        for node in &self.nodes {
            if let Some(s) = &node.split {
                let (l, r) = (&self.nodes[s.left], &self.nodes[s.right]);
                let n = node.n_samples as f64;
                let delta = node.impurity
                    - (l.n_samples as f64 / n) * l.impurity
                    - (r.n_samples as f64 / n) * r.impurity;
                imp[s.rule.feature] += (n / total) * delta;
            }
        }
        imp
    }

    pub fn mdi_importance(&self) -> Vec<f64> {
        normalize(self.raw_impurity_decrease())
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        for x in v.iter_mut() {
            *x /= sum;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub tree_seeds: Vec<u64>,
    pub feature_subsample_size: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub config: TrainConfig,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_accuracy: Option<f64>,
}

impl ForestModel {
    /// Mean of the per-tree probability vectors.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            let leaf = &t.nodes[t.apply(row)];
            let n = leaf.n_samples as f64;
            for (a, &c) in acc.iter_mut().zip(&leaf.class_counts) {
                *a += c as f64 / n;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    /// Hard majority vote over per-tree argmax classes (ties to the lowest class).
    pub fn predict_vote(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[argmax(&t.predict_proba(row))] += 1;
        }
        argmax_usize(&votes)
    }

    /// Per-tree impurity decreases averaged over trees, then normalized.
    pub fn mdi_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for (a, d) in imp.iter_mut().zip(t.raw_impurity_decrease()) {
                *a += d;
            }
        }
        let n = self.trees.len() as f64;
        normalize(imp.into_iter().map(|x| x / n).collect())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmax_usize(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Builder<'a> {
    data: &'a [f64],
    labels: &'a [u32],
    n_cols: usize,
    n_classes: usize,
    cfg: &'a TrainConfig,
    total: f64,
    nodes: Vec<Node>,
    subsample: usize,
    rng: Option<&'a mut ChaCha8Rng>,
}

#[derive(Clone, Copy)]
enum Score {
    /// Gini proxy `Σc_l²/n_l + Σc_r²/n_r` as an exact fraction (num, den).
    Exact(u128, u128),
    Float(f64),
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        match (self, other) {
            (Score::Exact(a, b), Score::Exact(c, d)) => a * d > c * b,
            (Score::Float(a), Score::Float(b)) => a > b,
            _ => unreachable!("mixed criteria"),
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: Score,
    n_left: usize,
}

impl<'a> Builder<'a> {
    fn counts(&self, samples: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.n_classes];
        for &i in samples {
            c[self.labels[i] as usize] += 1;
        }
        c
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        let v = self.data[row * self.n_cols + feature];
        if v.is_nan() {
            MISSING
        } else {
            v
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.rng.as_deref_mut() {
            Some(rng) if self.subsample < self.n_cols => {
                let mut f = index::sample(rng, self.n_cols, self.subsample).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_cols).collect(),
        }
    }

    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&samples);
        let n = samples.len();
        let imp = impurity(self.cfg.criterion, &counts).expect("non-empty node");
        let idx = self.nodes.len();
        self.nodes.push(Node {
            n_samples: n as u64,
            class_counts: counts.clone(),
            impurity: imp,
            split: None,
        });

        let pure = counts.iter().any(|&c| c as usize == n);
        if depth >= self.cfg.max_depth
            || n < self.cfg.min_samples_split
            || n < 2 * self.cfg.min_samples_leaf
            || pure
        {
            return idx;
        }
        let features = self.candidate_features();
        let Some(best) = self.best_split(&samples, &counts, &features) else {
            return idx;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.value(i, best.feature) <= best.threshold);
        debug_assert_eq!(left.len(), best.n_left);

        // Weighted decrease p(j)·Δi for the min_impurity_decrease rule.
        let lc = self.counts(&left);
        let rc = self.counts(&right);
        let li = impurity(self.cfg.criterion, &lc).expect("non-empty");
        let ri = impurity(self.cfg.criterion, &rc).expect("non-empty");
        let nf = n as f64;
        let weighted = (nf / self.total)
            * (imp - left.len() as f64 / nf * li - right.len() as f64 / nf * ri);
        if weighted < self.cfg.min_impurity_decrease {
            return idx;
        }

        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[idx].split = Some(Split {
            rule: SplitRule {
                feature: best.feature,
                threshold: best.threshold,
            },
            left: l,
            right: r,
        });
        idx
    }

    /// Best strictly impurity-decreasing split, or `None`.
    fn best_split(&self, samples: &[usize], counts: &[u64], features: &[usize]) -> Option<Candidate> {
        let n = samples.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(n);
        let mut left = vec![0u64; self.n_classes];

        for &f in features {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.value(i, f), self.labels[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0);
            for pos in 0..n - 1 {
                left[pairs[pos].1 as usize] += 1;
                let (v, next) = (pairs[pos].0, pairs[pos + 1].0);
                if v == next {
                    continue;
                }
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let score = self.score(counts, &left, n_left, n_right);
                if best.as_ref().is_none_or(|b| score.better_than(&b.score)) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        score,
                        n_left,
                    });
                }
            }
        }
        let best = best?;
        self.decreases(counts, &best.score).then_some(best)
    }

    fn score(&self, parent: &[u64], left: &[u64], n_left: usize, n_right: usize) -> Score {
        match self.cfg.criterion {
            Criterion::Gini => {
                let mut sl: u128 = 0;
                let mut sr: u128 = 0;
                for (&p, &l) in parent.iter().zip(left) {
                    let r = p - l;
                    sl += (l as u128) * (l as u128);
                    sr += (r as u128) * (r as u128);
                }
                let (nl, nr) = (n_left as u128, n_right as u128);
                Score::Exact(sl * nr + sr * nl, nl * nr)
            }
            Criterion::Entropy => {
                let right: Vec<u64> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
                let hl = entropy(left).expect("non-empty");
                let hr = entropy(&right).expect("non-empty");
                Score::Float(-(n_left as f64 * hl + n_right as f64 * hr))
            }
        }
    }

    /// Whether a split with this score strictly lowers the node impurity.
    fn decreases(&self, parent: &[u64], score: &Score) -> bool {
        let n: u128 = parent.iter().map(|&c| c as u128).sum();
        match *score {
            Score::Exact(num, den) => {
                let sp: u128 = parent.iter().map(|&c| (c as u128) * (c as u128)).sum();
                // num/den > sp/n
                num * n > sp * den
            }
            Score::Float(s) => {
                let h = entropy(parent).expect("non-empty");
                s > -(n as f64) * h + 1e-12 * n as f64
            }
        }
    }
}

fn check_trainable(train: &Cohort, cfg: &TrainConfig) -> Result<()> {
    if train.n_rows() == 0 {
        return Err(Error::EmptyCohort);
    }
    train.require_labels()?;
    cfg.validate(train.n_cols())
}

fn grow(
    train: &Cohort,
    samples: Vec<usize>,
    cfg: &TrainConfig,
    subsample: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> TreeModel {
    let labels = train.require_labels().expect("checked");
    let mut b = Builder {
        data: train.data(),
        labels: &labels.values,
        n_cols: train.n_cols(),
        n_classes: labels.n_classes(),
        cfg,
        total: samples.len() as f64,
        nodes: Vec::new(),
        subsample,
        rng,
    };
    b.build(samples, 0);
    TreeModel {
        nodes: b.nodes,
        n_classes: labels.n_classes(),
        n_features: train.n_cols(),
        config: cfg.clone(),
    }
}

/// Fit a single CART tree on every row, considering all features at each split.
pub fn fit_tree(train: &Cohort, cfg: &TrainConfig) -> Result<TreeModel> {
    check_trainable(train, cfg)?;
    let samples = (0..train.n_rows()).collect();
    Ok(grow(train, samples, cfg, train.n_cols(), None))
}

/// Fit a random forest. Tree `t` draws its bootstrap sample and split
/// candidates from a ChaCha8 stream seeded with `splitmix64(seed ^ t)`, so
/// the result does not depend on how trees are scheduled across threads.
pub fn fit_forest(train: &Cohort, cfg: &TrainConfig) -> Result<ForestModel> {
    check_trainable(train, cfg)?;
    let n = train.n_rows();
    let m = cfg.subsample_size(train.n_cols());
    let seeds: Vec<u64> = (0..cfg.n_trees as u64).map(|t| derive_seed(cfg.seed, t)).collect();

    let fitted: Vec<(TreeModel, Vec<bool>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = rng_from_seed(seed);
            let mut in_bag = vec![!cfg.bootstrap; n];
            let samples: Vec<usize> = if cfg.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                (0..n).collect()
            };
            let tree = grow(train, samples, cfg, m, Some(&mut rng));
            (tree, in_bag)
        })
        .collect();

    let labels = train.require_labels()?;
    let k = labels.n_classes();
    let oob_accuracy = cfg.bootstrap.then(|| {
        let mut correct = 0usize;
        let mut scored = 0usize;
        for i in 0..n {
            let mut acc = vec![0.0; k];
            let mut any = false;
            for (tree, in_bag) in &fitted {
                if !in_bag[i] {
                    any = true;
                    for (a, p) in acc.iter_mut().zip(tree.predict_proba(train.row(i))) {
                        *a += p;
                    }
                }
            }
            if any {
                scored += 1;
                correct += (argmax(&acc) == labels.values[i] as usize) as usize;
            }
        }
        if scored == 0 {
            f64::NAN
        } else {
            correct as f64 / scored as f64
        }
    });
    let oob_accuracy = oob_accuracy.filter(|a| !a.is_nan());

    Ok(ForestModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        tree_seeds: seeds,
        feature_subsample_size: m,
        n_classes: k,
        n_features: train.n_cols(),
        config: cfg.clone(),
        oob_accuracy,
    })
}
