use proptest::prelude::*;
use rand::Rng as _;
use tumorscope::classifiers::{
    fit, fit_all, fit_logistic, fit_svm, grid_csv, grid_table, logistic_objective, svm_objective, ClassifierConfig,
    ClassifierKind, DecisionTree, ForestConfig, GaussianNb, Knn, LogisticConfig, MlpConfig, Model, SvmConfig,
};
use tumorscope::features::FeatureMatrix;
use tumorscope::harness::{
    finite_diff, gini_split_scan, knn_brute_force, naive_bayes_log_ratio_direct, relative_error,
};
use tumorscope::rng::{seeded, Rng};
use tumorscope::Error;

fn fm(rows: &[Vec<f64>], labels: &[u8]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, labels).unwrap()
}

fn random_set(n: usize, d: usize, rng: &mut Rng) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let rows = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    (rows, labels)
}

/// Two Gaussian clusters far apart along every axis.
fn separable(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..d).map(|_| if l == 1 { 3.0 } else { -3.0 } + rng.gen_range(-1.0..1.0)).collect())
        .collect();
    fm(&rows, &labels)
}

fn with_k(k: usize) -> ClassifierConfig {
    ClassifierConfig {
        knn_k: k,
        ..ClassifierConfig::default()
    }
}

fn fast_config() -> ClassifierConfig {
    ClassifierConfig {
        forest: ForestConfig {
            n_trees: 15,
            ..ForestConfig::default()
        },
        mlp: MlpConfig {
            epochs: 150,
            ..MlpConfig::default()
        },
        ..ClassifierConfig::default()
    }
}

// ---------------------------------------------------------------- KNN

#[test]
fn knn_exact_match_returns_its_label() {
    let train = fm(&[vec![0.0, 0.0], vec![5.0, 1.0], vec![2.0, 7.0]], &[0, 1, 0]);
    let m = fit(ClassifierKind::Knn, &train, &with_k(1)).unwrap();
    assert_eq!(m.predict(&fm(&[vec![5.0, 1.0]], &[0])).unwrap(), vec![1]);
}

#[test]
fn knn_majority_of_three() {
    let knn = Knn::fit(vec![1.0, 2.0, 3.0], 1, vec![1, 0, 0], 3).unwrap();
    assert_eq!(knn.neighbors(&[0.0]), vec![0, 1, 2]);
    assert_eq!(knn.predict_row(&[0.0]), 0);
}

#[test]
fn knn_distance_ties_prefer_lower_index() {
    let knn = Knn::fit(vec![-1.0, 1.0, 1.0], 1, vec![1, 0, 1], 1).unwrap();
    assert_eq!(knn.neighbors(&[0.0]), vec![0]);
}

#[test]
fn knn_rejects_even_or_oversized_k() {
    let train = fm(&[vec![0.0], vec![1.0], vec![2.0]], &[0, 1, 0]);
    assert!(matches!(fit(ClassifierKind::Knn, &train, &with_k(2)), Err(Error::InvalidArgument(_))));
    assert!(matches!(fit(ClassifierKind::Knn, &train, &with_k(5)), Err(Error::InvalidArgument(_))));
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = seeded(7);
    for _ in 0..10 {
        let (rows, labels) = random_set(40, 5, &mut rng);
        let (queries, _) = random_set(15, 5, &mut rng);
        for k in [1, 3, 5] {
            let m = fit(ClassifierKind::Knn, &fm(&rows, &labels), &with_k(k)).unwrap();
            let q = fm(&queries, &vec![0; queries.len()]);
            assert_eq!(m.predict(&q).unwrap(), knn_brute_force(&rows, &labels, &queries, k));
        }
    }
}

// ---------------------------------------------------------------- logistic

#[test]
fn logistic_separates_one_dimension() {
    let train = fm(&[vec![-1.0], vec![1.0]], &[0, 1]);
    let m = fit(ClassifierKind::Logistic, &train, &ClassifierConfig::default()).unwrap();
    assert_eq!(m.predict(&train).unwrap(), vec![0, 1]);
}

#[test]
fn single_class_training_rejected() {
    let train = fm(&[vec![-1.0], vec![1.0]], &[1, 1]);
    for kind in ClassifierKind::ALL {
        assert!(matches!(fit(kind, &train, &ClassifierConfig::default()), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = seeded(3);
    for _ in 0..20 {
        let (rows, labels) = random_set(12, 3, &mut rng);
        let flat = rows.concat();
        let params: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, gw, gb) = logistic_objective(&flat, &labels, &params[..3], params[3], 0.3);
        let numeric = finite_diff(|p| logistic_objective(&flat, &labels, &p[..3], p[3], 0.3).0, &params, 1e-5).unwrap();
        let analytic: Vec<f64> = gw.into_iter().chain([gb]).collect();
        assert!(relative_error(&analytic, &numeric) <= 1e-5);
    }
}

#[test]
fn logistic_objective_decreases() {
    let x = separable(30, 4, 1);
    let m = fit_logistic(x.data(), 4, &x.labels, &LogisticConfig::default()).unwrap();
    assert!(m.objective.last().unwrap() < &m.objective[0]);
}

// ---------------------------------------------------------------- SVM

#[test]
fn svm_one_dimension_sign_function() {
    let train = fm(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]], &[0, 0, 1, 1]);
    let cfg = ClassifierConfig {
        svm: SvmConfig {
            c: 100.0,
            epochs: 20000,
            learning_rate: 1e-2,
        },
        ..ClassifierConfig::default()
    };
    let m = fit(ClassifierKind::Svm, &train, &cfg).unwrap();
    assert_eq!(m.predict(&train).unwrap(), vec![0, 0, 1, 1]);
    let Model::Svm(lin) = &m.model else { panic!() };
    // Raw inputs ±1 sit on the margin: standardized they are ±1/√2.5.
    let s = m.standardizer.std[0];
    let margin = lin.score(&[1.0 / s]);
    assert!((margin - 1.0).abs() < 0.05, "margin {margin}");
    assert!(lin.score(&[-2.0 / s]) < -1.0);
}

#[test]
fn svm_cannot_fit_xor() {
    let xor = fm(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]], &[0, 0, 1, 1]);
    let m = fit(ClassifierKind::Svm, &xor, &ClassifierConfig::default()).unwrap();
    let p = m.predict(&xor).unwrap();
    let correct = p.iter().zip(&xor.labels).filter(|(a, b)| a == b).count();
    assert!(correct <= 3);
}

#[test]
fn svm_objective_decreases() {
    let x = separable(30, 4, 2);
    let m = fit_svm(x.data(), 4, &x.labels, &SvmConfig::default()).unwrap();
    assert!(m.objective[99] < m.objective[0]);
}

#[test]
fn svm_subgradient_away_from_hinges() {
    let mut rng = seeded(5);
    let (rows, labels) = random_set(10, 2, &mut rng);
    let flat = rows.concat();
    let params = [0.3, -0.2, 0.1];
    let (_, gw, gb) = svm_objective(&flat, &labels, &params[..2], params[2], 1.0);
    let numeric = finite_diff(|p| svm_objective(&flat, &labels, &p[..2], p[2], 1.0).0, &params, 1e-6).unwrap();
    let analytic: Vec<f64> = gw.into_iter().chain([gb]).collect();
    assert!(relative_error(&analytic, &numeric) <= 1e-6);
}

// ---------------------------------------------------------------- naive Bayes

#[test]
fn naive_bayes_midpoint_is_boundary() {
    let nb = GaussianNb::fit(&[-1.0, -3.0, 1.0, 3.0], 1, &[0, 0, 1, 1]);
    assert!(nb.log_ratio(&[0.0]).abs() < 1e-12);
    assert_eq!(nb.predict_row(&[0.0]), 0);
}

#[test]
fn naive_bayes_far_classes() {
    let train = fm(&[vec![0.0], vec![0.2], vec![100.0], vec![100.2]], &[0, 0, 1, 1]);
    let m = fit(ClassifierKind::NaiveBayes, &train, &ClassifierConfig::default()).unwrap();
    let q = fm(&[vec![100.1], vec![0.1]], &[1, 0]);
    let r = m.log_ratios(&q).unwrap();
    assert!(r[0] > 100.0 && r[1] < -100.0);
    assert_eq!(m.predict(&q).unwrap(), vec![1, 0]);
}

#[test]
fn naive_bayes_singleton_class_is_floored() {
    let train = fm(&[vec![0.0], vec![1.0], vec![5.0]], &[0, 0, 1]);
    let m = fit(ClassifierKind::NaiveBayes, &train, &ClassifierConfig::default()).unwrap();
    let Model::NaiveBayes(nb) = &m.model else { panic!() };
    assert_eq!(nb.var[1], vec![1e-9]);
    assert_eq!(m.predict(&train).unwrap(), vec![0, 0, 1]);
}

#[test]
fn naive_bayes_matches_direct_density_product() {
    let mut rng = seeded(11);
    for _ in 0..20 {
        let (rows, labels) = random_set(30, 3, &mut rng);
        let m = fit(ClassifierKind::NaiveBayes, &fm(&rows, &labels), &ClassifierConfig::default()).unwrap();
        let query: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ours = m.log_ratios(&fm(std::slice::from_ref(&query), &[0])).unwrap()[0];
        let oracle = naive_bayes_log_ratio_direct(&rows, &labels, &query, 1e-9);
        assert!((ours - oracle).abs() <= 1e-9, "{ours} vs {oracle}");
    }
}

// ---------------------------------------------------------------- forest

#[test]
fn single_unbootstrapped_tree_memorizes() {
    let mut rng = seeded(2);
    let (rows, labels) = random_set(60, 4, &mut rng);
    let cfg = ClassifierConfig {
        forest: ForestConfig {
            n_trees: 1,
            max_depth: None,
            bootstrap: false,
            seed: 0,
        },
        ..ClassifierConfig::default()
    };
    let x = fm(&rows, &labels);
    let m = fit(ClassifierKind::RandomForest, &x, &cfg).unwrap();
    assert_eq!(m.predict(&x).unwrap(), labels);
}

#[test]
fn constant_features_predict_majority() {
    let x = fm(&vec![vec![1.0, 2.0]; 5], &[1, 0, 1, 1, 0]);
    let m = fit(ClassifierKind::RandomForest, &x, &fast_config()).unwrap();
    let Model::RandomForest(f) = &m.model else { panic!() };
    // Bootstrap samples vary, so each tree predicts its own sample's majority.
    assert!(f.trees.iter().all(|t| t.root_split().is_none()));
    let q = fm(&[vec![7.0, -3.0]], &[0]);
    assert_eq!(m.predict(&q).unwrap(), vec![1]);
}

#[test]
fn stump_matches_gini_scan() {
    let mut rng = seeded(13);
    for _ in 0..20 {
        let n = 20;
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let cut = rng.gen_range(-3.0..3.0);
        let labels: Vec<u8> = values.iter().map(|&v| u8::from(v > cut)).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        let tree = DecisionTree::fit(&values, 1, &labels, (0..n).collect(), Some(1), 1, &mut seeded(0)).unwrap();
        let (t, imp) = gini_split_scan(&values, &labels).unwrap();
        assert_eq!(imp, 0.0);
        assert!((tree.root_split().unwrap().1 - t).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------- MLP

#[test]
fn mlp_solves_xor() {
    let xor = fm(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]], &[0, 0, 1, 1]);
    let cfg = ClassifierConfig {
        mlp: MlpConfig {
            hidden: vec![8],
            epochs: 2000,
            ..MlpConfig::default()
        },
        ..ClassifierConfig::default()
    };
    let m = fit(ClassifierKind::Mlp, &xor, &cfg).unwrap();
    assert_eq!(m.predict(&xor).unwrap(), vec![0, 0, 1, 1]);
}

#[test]
fn mlp_without_hidden_layers_rejected() {
    let x = separable(10, 2, 0);
    let cfg = ClassifierConfig {
        mlp: MlpConfig {
            hidden: vec![],
            ..MlpConfig::default()
        },
        ..ClassifierConfig::default()
    };
    assert!(matches!(fit(ClassifierKind::Mlp, &x, &cfg), Err(Error::InvalidArgument(_))));
}

// ---------------------------------------------------------------- grid

#[test]
fn every_classifier_is_reproducible() {
    let mut rng = seeded(4);
    let (rows, labels) = random_set(40, 3, &mut rng);
    let x = fm(&rows, &labels);
    for kind in ClassifierKind::ALL {
        let a = fit(kind, &x, &fast_config()).unwrap();
        let b = fit(kind, &x, &fast_config()).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }
}

#[test]
fn separable_features_all_reach_098() {
    let train = separable(80, 6, 1);
    let eval = separable(50, 6, 2);
    let grid = fit_all(&train, &eval, &fast_config()).unwrap();
    assert_eq!(grid.len(), 6);
    for cell in &grid {
        let acc = cell.result.as_ref().unwrap().accuracy.value().unwrap();
        assert!(acc >= 0.98, "{}: {acc}", cell.kind);
    }
}

#[test]
fn duplicate_rows_get_identical_predictions() {
    let train = separable(40, 3, 5);
    let mut rows: Vec<Vec<f64>> = (0..5).map(|i| train.row(i).to_vec()).collect();
    rows.push(rows[2].clone());
    let q = fm(&rows, &[0; 6]);
    for kind in ClassifierKind::ALL {
        let p = fit(kind, &train, &fast_config()).unwrap().predict(&q).unwrap();
        assert_eq!(p[2], p[5], "{kind}");
    }
}

#[test]
fn grid_keeps_going_after_a_failure() {
    let train = separable(6, 2, 0);
    let cfg = ClassifierConfig {
        knn_k: 9,
        ..fast_config()
    };
    let grid = fit_all(&train, &train, &cfg).unwrap();
    assert!(grid[0].result.is_err());
    assert!(grid[1..].iter().all(|c| c.result.is_ok()));
    let named = vec![("CNN".to_string(), grid)];
    let csv = grid_csv(&named);
    assert!(csv.lines().nth(1).unwrap().starts_with("CNN,KNN,err"));
    let table = grid_table(&named);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[..2], ["CNN", "err"]);
    assert_eq!(row.len(), 7);
    assert!(table.contains("100.00"));
}

#[test]
fn grid_rejects_dimension_mismatch() {
    assert!(matches!(
        fit_all(&separable(6, 2, 0), &separable(6, 3, 0), &fast_config()),
        Err(Error::Shape(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_rescaling_leaves_knn_and_nb_unchanged(seed in 0u64..1000, scale in 0.1f64..20.0, shift in -50.0f64..50.0) {
        let mut rng = seeded(seed);
        let (rows, labels) = random_set(25, 3, &mut rng);
        let (queries, _) = random_set(10, 3, &mut rng);
        let warp = |r: &Vec<f64>| r.iter().enumerate().map(|(j, v)| v * scale * (j + 1) as f64 + shift).collect::<Vec<_>>();
        let rows2: Vec<Vec<f64>> = rows.iter().map(warp).collect();
        let queries2: Vec<Vec<f64>> = queries.iter().map(warp).collect();
        for kind in [ClassifierKind::Knn, ClassifierKind::NaiveBayes] {
            let a = fit(kind, &fm(&rows, &labels), &with_k(3)).unwrap().predict(&fm(&queries, &[0; 10])).unwrap();
            let b = fit(kind, &fm(&rows2, &labels), &with_k(3)).unwrap().predict(&fm(&queries2, &[0; 10])).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn swapping_labels_swaps_predictions(seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let (rows, labels) = random_set(21, 3, &mut rng);
        let (queries, _) = random_set(10, 3, &mut rng);
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let q = fm(&queries, &[0; 10]);
        for kind in [ClassifierKind::Knn, ClassifierKind::Logistic, ClassifierKind::NaiveBayes] {
            let a = fit(kind, &fm(&rows, &labels), &with_k(3)).unwrap();
            let b = fit(kind, &fm(&rows, &flipped), &with_k(3)).unwrap();
            let (pa, pb) = (a.predict(&q).unwrap(), b.predict(&q).unwrap());
            if kind == ClassifierKind::NaiveBayes {
                let (ra, rb) = (a.log_ratios(&q).unwrap(), b.log_ratios(&q).unwrap());
                for ((p, r), (pb, rb)) in pa.iter().zip(&ra).zip(pb.iter().zip(&rb)) {
                    prop_assert!((r + rb).abs() < 1e-9);
                    if r.abs() > 1e-9 {
                        prop_assert_eq!(*p, 1 - pb);
                    }
                }
            } else {
                let swapped: Vec<u8> = pa.iter().map(|p| 1 - p).collect();
                prop_assert_eq!(swapped, pb, "{}", kind);
            }
        }
    }
}
