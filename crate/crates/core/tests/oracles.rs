mod common;

use nalgebra::DVector;
use rand::Rng;

use common::*;
use strokescreen::evaluation::Metric;
use strokescreen::explain::{exact_shapley, permutation_importance, sampled_shapley, tree_shap, tree_shap_single};
use strokescreen::logit::{fit_logit, newton, LogitConfig, LogitProblem};
use strokescreen::tree::{fit_forest, fit_tree, TrainConfig};
use strokescreen::{Classifier, Cohort, LabelKind};

#[test]
fn tree_matches_enumeration_with_three_classes() {
    for fx in 0..300u64 {
        let mut r = rng(fx);
        let rows = r.random_range(3..=10);
        let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..3).map(|_| r.random_range(0..4) as f64).collect()).collect();
        let labels: Vec<u32> = (0..rows).map(|_| r.random_range(0..3)).collect();
        let c = cohort(data.clone(), labels.clone(), LabelKind::Risk);
        let tree = fit_tree(&c, &TrainConfig { max_depth: 2, ..TrainConfig::default() }).unwrap();
        let pairs: Vec<_> = data.into_iter().zip(labels).collect();
        assert_eq!(as_reference(&tree, 0), reference_tree(&pairs, 3, 0, 2), "fixture {fx}");
    }
}

#[test]
fn deeper_trees_match_enumeration() {
    for fx in 0..40u64 {
        let mut r = rng(1000 + fx);
        let c = random_cohort(&mut r, 25, 3, 6);
        let tree = fit_tree(&c, &TrainConfig { max_depth: 4, ..TrainConfig::default() }).unwrap();
        let pairs: Vec<_> = (0..c.n_rows())
            .map(|i| (c.row(i).to_vec(), c.labels().unwrap().values[i]))
            .collect();
        assert_eq!(as_reference(&tree, 0), reference_tree(&pairs, 3, 0, 4));
    }
}

#[test]
fn treeshap_matches_brute_force_on_forests() {
    for s in 0..10u64 {
        let mut r = rng(s);
        let data = random_cohort(&mut r, 90, 6, 4);
        let forest = fit_forest(&data, &TrainConfig { n_trees: 6, max_depth: 3, seed: s, ..TrainConfig::default() }).unwrap();
        let row: Vec<f64> = (0..6).map(|_| r.random_range(0..4) as f64).collect();
        let e = tree_shap(&forest, &row, 1).unwrap();
        let mut base = 0.0;
        let mut phi = vec![0.0; 6];
        for t in &forest.trees {
            let (b, p) = brute_force_shapley(6, |known| cover_expectation(t, 0, &row, known, 1));
            base += b / forest.trees.len() as f64;
            for (a, v) in phi.iter_mut().zip(p) {
                *a += v / forest.trees.len() as f64;
            }
        }
        assert!((e.base_value - base).abs() < 1e-12);
        for (a, b) in e.contributions.iter().zip(&phi) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_leaf_tree_explains_nothing() {
    let c = cohort(vec![vec![1.0], vec![2.0]], vec![1, 1], LabelKind::Binary);
    let tree = fit_tree(&c, &TrainConfig::default()).unwrap();
    let e = tree_shap_single(&tree, &[5.0], 1).unwrap();
    assert_eq!(e.contributions, vec![0.0]);
    assert_eq!(e.base_value, 1.0);
}

fn logistic_cohort(seed: u64, n: usize) -> Cohort {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|x| {
            let eta = 0.3 + x[0] - 0.7 * x[1] + 0.2 * x[2];
            u32::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    cohort(rows, y, LabelKind::Binary)
}

#[test]
fn exact_shapley_matches_interventional_brute_force() {
    let train = logistic_cohort(3, 400);
    let (model, _) = fit_logit(&train, &LogitConfig::default()).unwrap();
    let background = train.select_rows(&(0..25).collect::<Vec<_>>());
    let row = [0.4, -1.1, 1.7];
    let e = exact_shapley(&model, &row, &background, 1).unwrap();
    let (base, phi) = brute_force_shapley(3, |known| {
        let mut total = 0.0;
        for i in 0..background.n_rows() {
            let b = background.row(i);
            let x: Vec<f64> = (0..3).map(|j| if known[j] { row[j] } else { b[j] }).collect();
            total += model.predict_proba(&x);
        }
        total / background.n_rows() as f64
    });
    assert!((e.base_value - base).abs() < 1e-12);
    for (a, b) in e.contributions.iter().zip(&phi) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(e.local_accuracy_error() < 1e-12);
}

#[test]
fn sampled_shapley_is_locally_accurate_and_close_to_exact() {
    let train = logistic_cohort(4, 400);
    let (model, _) = fit_logit(&train, &LogitConfig::default()).unwrap();
    let background = train.select_rows(&(0..40).collect::<Vec<_>>());
    let row = [1.2, 0.3, -0.8];
    let exact = exact_shapley(&model, &row, &background, 1).unwrap();
    let sampled = sampled_shapley(&model, &row, &background, 1, 200, 9).unwrap();
    assert!(sampled.local_accuracy_error() < 1e-12);
    for (a, b) in exact.contributions.iter().zip(&sampled.contributions) {
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }
}

#[test]
fn information_is_the_negative_hessian() {
    for s in 0..10u64 {
        let mut r = rng(s);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..30).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect();
        let p = LogitProblem::new(&rows, &y);
        let beta = DVector::from_vec(vec![0.2, -0.4, 0.9]);
        let info = p.information(&beta);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = beta.clone();
            up[k] += h;
            let mut down = beta.clone();
            down[k] -= h;
            let column = (p.gradient(&up) - p.gradient(&down)) / (2.0 * h);
            for j in 0..3 {
                assert!((info[(j, k)] + column[j]).abs() < 1e-6, "({j},{k})");
            }
        }
    }
}

#[test]
fn newton_log_likelihood_never_decreases() {
    let c = logistic_cohort(5, 2000);
    let (_, d) = fit_logit(&c, &LogitConfig::default()).unwrap();
    assert!(d.converged);
    assert!(d.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0]));
    assert!(d.max_abs_gradient < 1e-6);
}

#[test]
fn newton_recovers_coefficients() {
    let c = logistic_cohort(6, 20_000);
    let rows: Vec<Vec<f64>> = (0..c.n_rows()).map(|i| c.row(i).to_vec()).collect();
    let y: Vec<f64> = c.labels().unwrap().values.iter().map(|&v| f64::from(v)).collect();
    let fit = newton(&LogitProblem::new(&rows, &y), &LogitConfig::default()).unwrap();
    for (got, want) in fit.beta.iter().zip([0.3, 1.0, -0.7, 0.2]) {
        assert!((got - want).abs() < 0.08, "{got} vs {want}");
    }
}

#[test]
fn permutation_importance_recounts() {
    let mut r = rng(8);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
    let y = rows.iter().map(|x| u32::from(x[0] + 0.2 * x[1] > 0.6)).collect();
    let c = cohort(rows, y, LabelKind::Binary);
    let tree = fit_tree(&c, &TrainConfig { max_depth: 3, ..TrainConfig::default() }).unwrap();
    let rep = permutation_importance(&tree, &c, Metric::Accuracy, 4, 1).unwrap();
    let truth = &c.labels().unwrap().values;
    let acc = |preds: &[usize]| preds.iter().zip(truth).filter(|(p, t)| **p == **t as usize).count() as f64 / 300.0;
    let baseline = acc(&tree.predict_cohort(&c));
    assert_eq!(rep.baseline, baseline);
    for f in &rep.features {
        let mean = f.scores.iter().sum::<f64>() / 4.0;
        assert!((f.importance - (baseline - mean)).abs() < 1e-15);
    }
    assert!(rep.features[0].importance > rep.features[1].importance);
}
