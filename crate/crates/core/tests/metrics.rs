use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplerules::data::{stratified_kfold, Dataset};
use simplerules::metrics::{accuracy, auc, cv_sweep, SweepConfig, SweepModel};
use simplerules::selection::SelectionConfig;
use simplerules::srr::SrrConfig;

mod common;
use common::brute_auc;

fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            proptest::collection::vec(-50.0f64..50.0, n),
            proptest::collection::vec(0u8..2, n),
        )
    })
}

fn tied() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            proptest::collection::vec((-4i32..4).prop_map(f64::from), n),
            proptest::collection::vec(0u8..2, n),
        )
    })
}

fn both_classes(y: &[u8]) -> bool {
    y.contains(&0) && y.contains(&1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rank_sum_equals_pair_counting((s, y) in labelled()) {
        prop_assume!(both_classes(&y));
        prop_assert_eq!(auc(&s, &y).unwrap(), brute_auc(&s, &y));
    }

    #[test]
    fn rank_sum_equals_pair_counting_with_ties((s, y) in tied()) {
        prop_assume!(both_classes(&y));
        prop_assert_eq!(auc(&s, &y).unwrap(), brute_auc(&s, &y));
    }

    #[test]
    fn increasing_transforms_preserve_auc((s, y) in tied()) {
        prop_assume!(both_classes(&y));
        let t: Vec<f64> = s.iter().map(|v| (0.3 * v).exp() * 2.0 + 7.0).collect();
        prop_assert_eq!(auc(&t, &y).unwrap(), auc(&s, &y).unwrap());
    }

    #[test]
    fn negated_scores_complement_auc((s, y) in labelled()) {
        prop_assume!(both_classes(&y));
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let total = auc(&s, &y).unwrap() + auc(&neg, &y).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
    assert_eq!(auc(&[0.1, 0.2, 0.7, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(auc(&[3.0; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
}

#[test]
fn accuracy_examples() {
    assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
    assert_eq!(accuracy(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
    assert_eq!(accuracy(&[1, 0, 1, 0], &[1, 1, 1, 1]).unwrap(), 0.5);
    assert!(accuracy(&[1, 0], &[1]).is_err());
}

fn one_signal(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = 1.0 / (1.0 + (-2.5 * x[2]).exp());
        y.push(u8::from(rng.gen::<f64>() < p));
        rows.push(x);
    }
    Dataset::new((0..4).map(|j| format!("x{j}")).collect(), &rows, y).unwrap()
}

#[test]
fn one_cell_sweep_tracks_the_unrounded_model() {
    let ds = one_signal(2, 800);
    let folds = stratified_kfold(ds.labels(), 5, 2).unwrap();
    let cfg = SweepConfig {
        srr: SrrConfig {
            selection: SelectionConfig {
                grouped: false,
                ..Default::default()
            },
            ..Default::default()
        },
        inner_folds: 5,
        ..Default::default()
    };
    let res = cv_sweep(&ds, &[1], &[1], &folds, &cfg).unwrap();
    assert_eq!(res.errors().count(), 0);
    let card = res.scorecard_auc(1, 1).unwrap();
    let lasso = res
        .mean_auc(SweepModel::SelectedLasso, Some(1), None)
        .unwrap();
    // A single feature with weight ±1 ranks exactly like its coefficient.
    assert!((card - lasso).abs() < 1e-12, "{card} vs {lasso}");
    assert!(card > 0.7);
}

#[test]
fn sweep_aucs_stay_in_the_unit_interval() {
    let ds = one_signal(9, 300);
    let folds = stratified_kfold(ds.labels(), 3, 9).unwrap();
    let cfg = SweepConfig {
        srr: SrrConfig {
            selection: SelectionConfig {
                grouped: false,
                ..Default::default()
            },
            ..Default::default()
        },
        inner_folds: 3,
        ..Default::default()
    };
    let res = cv_sweep(&ds, &[1, 2, 3, 4], &[1, 2, 3], &folds, &cfg).unwrap();
    for k in 1..=4 {
        for m in 1..=3 {
            let a = res.scorecard_auc(k, m).unwrap();
            assert!((0.0..=1.0).contains(&a));
        }
    }
    assert!(res
        .rows
        .iter()
        .filter_map(|r| r.auc)
        .all(|a| (0.0..=1.0).contains(&a)));
    let mut csv = Vec::new();
    res.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("model,k,M,fold,auc,accuracy,error"));
}
