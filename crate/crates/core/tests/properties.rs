mod common;

use proptest::prelude::*;

use common::*;
use strokescreen::cohort::{cleanse, read_csv, split_stratified, CleanseConfig};
use strokescreen::cspp::{label_risk, RiskFactors};
use strokescreen::evaluation::classification_report;
use strokescreen::explain::tree_shap;
use strokescreen::schema::{col, FeatureSchema, FeatureSpec};
use strokescreen::tree::{fit_forest, fit_tree, TrainConfig};
use strokescreen::{Cohort, LabelKind, Labels, MISSING};

fn bp_cohort(rows: Vec<(f64, f64, f64)>) -> Cohort {
    let schema = FeatureSchema::new(vec![
        FeatureSpec::numerical(col::SYSTOLIC_BP, None, None),
        FeatureSpec::numerical(col::DIASTOLIC_BP, None, None),
        FeatureSpec::numerical(col::TG, None, None),
    ])
    .unwrap();
    Cohort::new(schema, rows.into_iter().map(|(a, b, c)| vec![a, b, c]).collect(), None).unwrap()
}

fn reading() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => (60u32..200).prop_map(f64::from),
        1 => Just(MISSING),
        1 => Just(f64::NAN),
    ]
}

fn random_forest_data(seed: u64) -> Cohort {
    random_cohort(&mut rng(seed), 60, 4, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cleansing_is_idempotent(rows in prop::collection::vec((reading(), reading(), reading()), 1..40),
                               threshold in 0.0f64..1.0) {
        let cfg = CleanseConfig { missing_threshold: threshold, ..CleanseConfig::default() };
        let (once, _) = cleanse(&bp_cohort(rows), &cfg);
        let (twice, report) = cleanse(&once, &cfg);
        prop_assert_eq!(once.schema(), twice.schema());
        prop_assert_eq!(once.data(), twice.data());
        prop_assert_eq!(report.corrected_bp_rows, 0);
        prop_assert!(report.dropped_columns.is_empty());
    }

    #[test]
    fn cleansed_pressure_is_ordered(rows in prop::collection::vec((reading(), reading(), reading()), 1..40)) {
        let (out, _) = cleanse(&bp_cohort(rows), &CleanseConfig { missing_threshold: 1.0, ..CleanseConfig::default() });
        for row in out.rows().take(out.n_rows()) {
            prop_assert!(row.iter().all(|v| !v.is_nan()));
            if row[0] != MISSING && row[1] != MISSING {
                prop_assert!(row[1] < row[0]);
            }
        }
    }

    #[test]
    fn adding_a_factor_never_lowers_risk(bits in 0u16..1024, k in 0usize..10) {
        let before = label_risk(&RiskFactors::from_bits(bits));
        let after = label_risk(&RiskFactors::from_bits(bits | 1 << k));
        prop_assert!(after >= before);
    }

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>(), row in prop::collection::vec(-2.0f64..8.0, 4)) {
        let data = random_forest_data(seed);
        let cfg = TrainConfig { n_trees: 7, seed, ..TrainConfig::default() };
        let tree = fit_tree(&data, &cfg).unwrap();
        let forest = fit_forest(&data, &cfg).unwrap();
        for p in [tree.predict_proba(&row), forest.predict_proba(&row)] {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn importance_sums_to_one(seed in any::<u64>(), depth in 1usize..8) {
        let data = random_forest_data(seed);
        let cfg = TrainConfig { n_trees: 5, max_depth: depth, seed, ..TrainConfig::default() };
        let forest = fit_forest(&data, &cfg).unwrap();
        let imp = forest.mdi_importance();
        let total: f64 = imp.iter().sum();
        // All-zero only when no tree split at all.
        let any_split = forest.trees.iter().any(|t| t.nodes.len() > 1);
        if any_split {
            prop_assert!((total - 1.0).abs() < 1e-9);
        } else {
            prop_assert_eq!(total, 0.0);
        }
        prop_assert!(imp.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn forest_shap_is_locally_accurate(seed in any::<u64>(), row in prop::collection::vec(-1.0f64..7.0, 4), class in 0usize..3) {
        let data = random_forest_data(seed);
        let forest = fit_forest(&data, &TrainConfig { n_trees: 9, max_depth: 5, seed, ..TrainConfig::default() }).unwrap();
        let e = tree_shap(&forest, &row, class).unwrap();
        prop_assert!(e.local_accuracy_error() < 1e-9);
        prop_assert!((e.output - forest.predict_proba(&row)[class]).abs() < 1e-15);
    }

    #[test]
    fn report_identities_hold(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..200)) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = classification_report(&truth, &pred, &names).unwrap();
        let n = truth.len();
        // Recount from the raw pairs.
        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        prop_assert!((r.accuracy - correct as f64 / n as f64).abs() < 1e-15);
        prop_assert_eq!(r.classes.iter().map(|c| c.support).sum::<usize>(), n);
        let mut weighted = 0.0;
        for (k, c) in r.classes.iter().enumerate() {
            let tp = truth.iter().zip(&pred).filter(|(t, p)| **t == k && **p == k).count() as f64;
            let predicted = pred.iter().filter(|p| **p == k).count() as f64;
            let actual = truth.iter().filter(|t| **t == k).count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            prop_assert!((c.precision - precision).abs() < 1e-15);
            prop_assert!((c.recall - recall).abs() < 1e-15);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            prop_assert!((c.f1 - f1).abs() < 1e-15);
            weighted += actual * precision;
        }
        prop_assert!((r.weighted_avg.precision - weighted / n as f64).abs() < 1e-12);
        // The confusion matrix is the joint count.
        let cells: usize = r.confusion.iter().flatten().sum();
        prop_assert_eq!(cells, n);
        // Micro-averaged recall is accuracy.
        prop_assert!((r.weighted_avg.recall - r.accuracy).abs() < 1e-12);
    }

    #[test]
    fn stratified_split_partitions_rows(labels in prop::collection::vec(0u32..3, 30..120), seed in any::<u64>()) {
        let mut counts = [0usize; 3];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        prop_assume!(counts.iter().all(|&c| c >= 4));
        let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64]).collect();
        let c = cohort(rows, labels.clone(), LabelKind::Risk);
        let (train, test) = split_stratified(&c, 0.25, seed).unwrap();
        let mut ids: Vec<f64> = train.column(0);
        ids.extend(test.column(0));
        ids.sort_by(f64::total_cmp);
        prop_assert_eq!(ids, (0..labels.len()).map(|i| i as f64).collect::<Vec<_>>());
        for k in 0..3u32 {
            let in_test = test.labels().unwrap().values.iter().filter(|&&v| v == k).count();
            prop_assert_eq!(in_test, (counts[k as usize] as f64 * 0.25).round() as usize);
        }
    }

    #[test]
    fn csv_round_trip(values in prop::collection::vec((-1e6f64..1e6, 0u32..3, 0u32..3), 1..30)) {
        let schema = FeatureSchema::new(vec![
            FeatureSpec::numerical("x", None, None),
            FeatureSpec::categorical("k", 3),
        ]).unwrap();
        let rows = values.iter().map(|(x, k, _)| vec![*x, f64::from(*k)]).collect();
        let y = values.iter().map(|v| v.2).collect();
        let c = Cohort::new(schema.clone(), rows, Some(Labels::new(LabelKind::Risk, y).unwrap())).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let (back, report) = read_csv(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(report.unparseable_cells, 0);
        prop_assert_eq!(back, c);
    }
}
