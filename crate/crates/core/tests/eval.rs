mod support;

use proptest::prelude::*;
use shcnn::eval::benchmark::{self, BenchmarkConfig, Method, MethodSettings};
use shcnn::eval::{self, ResultRow, RESULTS_HEADER};
use shcnn::nn::TrainConfig;
use shcnn::synthwafer::WaferLayout;
use shcnn::{AugmentationLevel, Error};

#[test]
fn split_is_a_fixed_ratio_partition_for_every_seed() {
    support::split_laws(1000).unwrap();
    assert_eq!(support::split_sizes_oracle(100), [50, 25, 25]);
    assert_eq!(support::split_sizes_oracle(101), [51, 25, 25]);
    assert_eq!(support::split_sizes_oracle(103), [51, 26, 26]);
    assert!(matches!(eval::split_dataset(3, 0), Err(Error::TooFew { .. })));
}

#[test]
fn different_seeds_give_different_splits() {
    let a = eval::split_dataset(100, 1).unwrap();
    let b = eval::split_dataset(100, 2).unwrap();
    assert_ne!(a.train, b.train);
}

#[test]
fn balancing_equalizes_counts() {
    support::balance_laws(300).unwrap();
    assert!(matches!(eval::balance_classes(&[0, 2, 2], 0), Err(Error::EmptyClass(1))));
    assert!(eval::balance_classes(&[], 0).is_err());
}

#[test]
fn run_stats_match_hand_computation() {
    support::run_stats_laws().unwrap();
    assert!(eval::run_stats(&[0.5]).is_err());
}

#[test]
fn confusion_trace_is_accuracy() {
    let mut g = support::Gen::new(4);
    for _ in 0..100 {
        let n = 1 + g.below(50);
        let truth: Vec<usize> = (0..n).map(|_| g.below(3)).collect();
        let pred: Vec<usize> = (0..n).map(|_| g.below(3)).collect();
        let m = eval::confusion_matrix(&pred, &truth, 3).unwrap();
        let trace: usize = (0..3).map(|k| m[k][k]).sum();
        let total: usize = m.iter().flatten().sum();
        assert_eq!(total, n);
        assert_eq!(trace as f64 / n as f64, eval::accuracy(&pred, &truth).unwrap());
        for k in 0..3 {
            assert_eq!(m[k].iter().sum::<usize>(), truth.iter().filter(|&&t| t == k).count());
        }
    }
    assert!(eval::accuracy(&[], &[]).is_err());
    assert!(eval::accuracy(&[0], &[0, 1]).is_err());
    assert!(eval::confusion_matrix(&[3], &[0], 3).is_err());
}

#[test]
fn results_csv_layout() {
    let rows = vec![ResultRow {
        method: "CNN".into(),
        aug_level: 2,
        stats: eval::run_stats(&[0.5, 0.7]).unwrap(),
    }];
    let text = eval::results_csv(&rows, &[("seed", "3".into())]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["# seed: 3", RESULTS_HEADER, "CNN,2,0.6000,0.1414"]);
}

fn tiny() -> BenchmarkConfig {
    BenchmarkConfig {
        layout: WaferLayout::centered(6, 6, 32, 8, 100.0),
        patches_per_class: 8,
        patch_size: 16,
        ..BenchmarkConfig::default()
    }
}

fn quick_settings() -> MethodSettings {
    let mut s = MethodSettings::default();
    s.network.block_widths = [2, 2, 4];
    s.network.dense1_units = 8;
    let quick = TrainConfig {
        epochs: 2,
        ..s.cnn_train.clone()
    };
    s.cnn_train = quick.clone();
    s.mlp_train = quick;
    s.mlp_hidden = 8;
    s.forest.n_trees = 5;
    s
}

#[test]
fn every_method_runs_and_is_reproducible() {
    let bench = benchmark::build_street_benchmark(&tiny()).unwrap();
    let settings = quick_settings();
    let levels = [AugmentationLevel(0), AugmentationLevel(1)];
    let a = benchmark::run_benchmark(&bench, &Method::ALL, &levels, &settings, 2, 5).unwrap();
    assert_eq!(a.len(), 12);
    for r in &a {
        assert!((0.0..=1.0).contains(&r.stats.mean));
        assert_eq!(r.stats.accuracies.len(), 2);
    }
    let b = benchmark::run_benchmark(&bench, &Method::ALL, &levels, &settings, 2, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unlocalized_crops_are_offset_versions_of_the_same_streets() {
    let bench = benchmark::build_street_benchmark(&tiny()).unwrap();
    assert!(bench.len() >= 24);
    let counts = bench.class_counts();
    assert!(counts.iter().all(|&c| c == 8));
    let differ = bench.localized.iter().zip(&bench.unlocalized).filter(|(a, b)| a.0 != b.0).count();
    assert!(differ > bench.len() / 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accuracy_is_a_fraction_of_hits(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..60)) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let hits = pairs.iter().filter(|(p, t)| p == t).count();
        prop_assert_eq!(eval::accuracy(&pred, &truth).unwrap(), hits as f64 / pairs.len() as f64);
    }
}
