//! Reference implementations the library is checked against. Each one is
//! written from the textbook definition and shares no code with the crate.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokescreen::tree::TreeModel;
use strokescreen::{Cohort, FeatureSchema, FeatureSpec, LabelKind, Labels};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Risk level from the screening rule as worded: flags are the eight
/// numbered factors followed by prior stroke and prior TIA.
/// Returns 0 (low), 1 (medium) or 2 (high).
pub fn prose_risk_level(flags: [bool; 10]) -> u32 {
    let numbered = &flags[..8];
    let how_many = numbered.iter().filter(|&&f| f).count();
    // "at least three factors from factor 1 to 8; or one of a and b"
    if how_many >= 3 || flags[8] || flags[9] {
        return 2;
    }
    // "less than three ... with at least one being factor 1, 2 or 3"
    if flags[0] || flags[1] || flags[2] {
        return 1;
    }
    0
}

/// All-numerical schema `x0, x1, ...`.
pub fn numeric_schema(n: usize) -> FeatureSchema {
    FeatureSchema::new((0..n).map(|j| FeatureSpec::numerical(&format!("x{j}"), None, None)).collect())
        .unwrap()
}

pub fn cohort(rows: Vec<Vec<f64>>, labels: Vec<u32>, kind: LabelKind) -> Cohort {
    let width = rows[0].len();
    Cohort::new(numeric_schema(width), rows, Some(Labels::new(kind, labels).unwrap())).unwrap()
}

/// Random small-integer data with three risk classes; small value ranges
/// force many ties.
pub fn random_cohort(r: &mut ChaCha8Rng, rows: usize, cols: usize, levels: u32) -> Cohort {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| r.random_range(0..levels) as f64).collect())
        .collect();
    let labels = (0..rows).map(|_| r.random_range(0..3u32)).collect();
    cohort(data, labels, LabelKind::Risk)
}

// ---- CART by exhaustive enumeration ----

#[derive(Debug, Clone, PartialEq)]
pub enum RefNode {
    Leaf(Vec<u64>),
    Split {
        feature: usize,
        threshold: f64,
        counts: Vec<u64>,
        left: Box<RefNode>,
        right: Box<RefNode>,
    },
}

fn gini_of(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn class_counts(rows: &[(Vec<f64>, u32)], k: usize) -> Vec<u64> {
    let mut c = vec![0; k];
    for (_, y) in rows {
        c[*y as usize] += 1;
    }
    c
}

/// Greedy CART: at each node try every feature and every midpoint between
/// consecutive distinct values, keep the lowest weighted child Gini (first
/// found wins ties), split only if that is below the node's Gini.
pub fn reference_tree(rows: &[(Vec<f64>, u32)], k: usize, depth: usize, max_depth: usize) -> RefNode {
    let counts = class_counts(rows, k);
    let n = rows.len();
    let parent = gini_of(&counts);
    if depth >= max_depth || n < 2 || counts.iter().any(|&c| c as usize == n) {
        return RefNode::Leaf(counts);
    }
    let width = rows[0].0.len();
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..width {
        let mut values: Vec<f64> = rows.iter().map(|r| r.0[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|row| row.0[f] <= t);
            let weighted = (l.len() as f64 * gini_of(&class_counts(&l, k))
                + r.len() as f64 * gini_of(&class_counts(&r, k)))
                / n as f64;
            if best.is_none_or(|(b, _, _)| weighted < b - 1e-12) {
                best = Some((weighted, f, t));
            }
        }
    }
    match best {
        Some((weighted, f, t)) if weighted < parent - 1e-12 => {
            let (l, r): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|row| row.0[f] <= t);
            RefNode::Split {
                feature: f,
                threshold: t,
                counts,
                left: Box::new(reference_tree(&l, k, depth + 1, max_depth)),
                right: Box::new(reference_tree(&r, k, depth + 1, max_depth)),
            }
        }
        _ => RefNode::Leaf(counts),
    }
}

/// Convert a fitted tree to the reference shape.
pub fn as_reference(tree: &TreeModel, idx: usize) -> RefNode {
    let node = &tree.nodes[idx];
    match &node.split {
        None => RefNode::Leaf(node.class_counts.clone()),
        Some(s) => RefNode::Split {
            feature: s.rule.feature,
            threshold: s.rule.threshold,
            counts: node.class_counts.clone(),
            left: Box::new(as_reference(tree, s.left)),
            right: Box::new(as_reference(tree, s.right)),
        },
    }
}

// ---- Shapley values by brute force ----

/// `E[f | x_S]` under the tree's training cover: known features follow the
/// row, unknown ones mix both children by sample count.
pub fn cover_expectation(tree: &TreeModel, idx: usize, row: &[f64], known: &[bool], class: usize) -> f64 {
    let node = &tree.nodes[idx];
    match &node.split {
        None => node.class_counts[class] as f64 / node.n_samples as f64,
        Some(s) => {
            let f = s.rule.feature;
            if known[f] {
                let next = if row[f] <= s.rule.threshold { s.left } else { s.right };
                cover_expectation(tree, next, row, known, class)
            } else {
                let (l, r) = (&tree.nodes[s.left], &tree.nodes[s.right]);
                (l.n_samples as f64 * cover_expectation(tree, s.left, row, known, class)
                    + r.n_samples as f64 * cover_expectation(tree, s.right, row, known, class))
                    / node.n_samples as f64
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `φ_i = Σ_{S ⊆ F∖{i}} |S|! (n−|S|−1)! / n! · (v(S ∪ {i}) − v(S))`.
/// Returns `(v(∅), φ)`.
pub fn brute_force_shapley(n: usize, v: impl Fn(&[bool]) -> f64) -> (f64, Vec<f64>) {
    let values: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            let known: Vec<bool> = (0..n).map(|j| mask >> j & 1 == 1).collect();
            v(&known)
        })
        .collect();
    let total = factorial(n);
    let phi = (0..n)
        .map(|i| {
            (0..1usize << n)
                .filter(|mask| mask >> i & 1 == 0)
                .map(|mask| {
                    let s = mask.count_ones() as usize;
                    factorial(s) * factorial(n - s - 1) / total * (values[mask | 1 << i] - values[mask])
                })
                .sum()
        })
        .collect();
    (values[0], phi)
}
