use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplerules::data::{Dataset, FeatureGroup};
use simplerules::selection::{forward_stepwise, SelectionConfig};

mod common;
use common::continuous_dataset;

fn per_column() -> SelectionConfig {
    SelectionConfig {
        grouped: false,
        ..Default::default()
    }
}

/// Deviance of a model that fits every cell of `key` exactly: the logistic
/// MLE on a saturating design reproduces each cell's outcome rate.
fn saturated_deviance(keys: &[Vec<u64>], y: &[u8]) -> f64 {
    let mut cells: BTreeMap<&[u64], (f64, f64)> = BTreeMap::new();
    for (k, &yi) in keys.iter().zip(y) {
        let c = cells.entry(k.as_slice()).or_default();
        c.0 += 1.0;
        c.1 += f64::from(yi);
    }
    let mut dev = 0.0;
    for &(n, pos) in cells.values() {
        let p = pos / n;
        if pos > 0.0 {
            dev -= 2.0 * pos * p.ln();
        }
        if pos < n {
            dev -= 2.0 * (n - pos) * (1.0 - p).ln();
        }
    }
    dev
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shorter_runs_are_prefixes_of_longer_runs(seed in 0u64..10_000, p in 2usize..6, k1 in 1usize..5) {
        let ds = continuous_dataset(seed, 80, p);
        let k1 = k1.min(p - 1);
        let short = forward_stepwise(&ds, k1, &per_column()).unwrap();
        let long = forward_stepwise(&ds, p, &per_column()).unwrap();
        prop_assert_eq!(&long.ordered_features()[..k1], &short.ordered_features()[..]);
        prop_assert!(long.deviance.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        prop_assert!(long.deviance[0] <= long.null_deviance + 1e-9);
    }

    #[test]
    fn first_step_is_the_brute_force_single_indicator_minimizer(
        bits in proptest::collection::vec((0u8..2, 0u8..2, 0u8..2, 0u8..2), 60..120),
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = bits
            .iter()
            .map(|&(a, b, c, d)| vec![f64::from(a), f64::from(b), f64::from(c), f64::from(d)])
            .collect();
        let y: Vec<u8> = rows
            .iter()
            .map(|r| {
                let p = 0.25 + 0.3 * r[1] + 0.15 * r[3];
                u8::from(rng.gen::<f64>() < p)
            })
            .collect();
        // Every (column, level) cell needs both outcomes so that no single
        // indicator separates the classes.
        for j in 0..4 {
            for level in [0.0, 1.0] {
                let ys: Vec<u8> = rows.iter().zip(&y).filter(|(r, _)| r[j] == level).map(|(_, &v)| v).collect();
                prop_assume!(ys.contains(&0) && ys.contains(&1));
            }
        }
        let ds = Dataset::new((0..4).map(|j| format!("b{j}")).collect(), &rows, y.clone()).unwrap();
        let devs: Vec<f64> = (0..4)
            .map(|j| {
                let keys: Vec<Vec<u64>> = rows.iter().map(|r| vec![r[j] as u64]).collect();
                saturated_deviance(&keys, &y)
            })
            .collect();
        let mut best = 0;
        for j in 1..4 {
            if devs[j] < devs[best] - 1e-9 {
                best = j;
            }
        }
        let runner_up_gap = (0..4)
            .filter(|&j| j != best)
            .map(|j| devs[j] - devs[best])
            .fold(f64::INFINITY, f64::min);
        prop_assume!(runner_up_gap > 1e-6);
        let t = forward_stepwise(&ds, 1, &per_column()).unwrap();
        prop_assert_eq!(t.ordered_features(), vec![best]);
        prop_assert!((t.deviance[0] - devs[best]).abs() < 1e-6, "{} vs {}", t.deviance[0], devs[best]);
    }
}

#[test]
fn grouped_first_step_matches_cell_mean_deviance() {
    // Two three-level categorical variables coded as two indicators each.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 600;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut levels = Vec::new();
    for _ in 0..n {
        let a: usize = rng.gen_range(0..3);
        let b: usize = rng.gen_range(0..3);
        let p = [0.2, 0.35, 0.5][a] + [0.0, 0.05, 0.1][b];
        y.push(u8::from(rng.gen::<f64>() < p));
        rows.push(vec![
            f64::from(u8::from(a == 1)),
            f64::from(u8::from(a == 2)),
            f64::from(u8::from(b == 1)),
            f64::from(u8::from(b == 2)),
        ]);
        levels.push((a as u64, b as u64));
    }
    let names = ["a_1", "a_2", "b_1", "b_2"].map(String::from).to_vec();
    let ds = Dataset::new(names, &rows, y.clone())
        .unwrap()
        .with_feature_groups(vec![
            FeatureGroup {
                name: "a".into(),
                columns: vec![0, 1],
            },
            FeatureGroup {
                name: "b".into(),
                columns: vec![2, 3],
            },
        ])
        .unwrap();
    let dev_a = saturated_deviance(&levels.iter().map(|l| vec![l.0]).collect::<Vec<_>>(), &y);
    let dev_b = saturated_deviance(&levels.iter().map(|l| vec![l.1]).collect::<Vec<_>>(), &y);
    let dev_ab = saturated_deviance(
        &levels.iter().map(|l| vec![l.0, l.1]).collect::<Vec<_>>(),
        &y,
    );
    let t = forward_stepwise(&ds, 2, &SelectionConfig::default()).unwrap();
    let first = if dev_a < dev_b { "a" } else { "b" };
    assert_eq!(t.unit_names()[0], first);
    assert!((t.deviance[0] - dev_a.min(dev_b)).abs() < 1e-6);
    // Main effects only, so the two-unit model cannot beat the saturated one.
    assert!(t.deviance[1] >= dev_ab - 1e-6);
}

#[test]
fn exhausting_all_features_returns_each_once() {
    let ds = continuous_dataset(3, 120, 5);
    let t = forward_stepwise(&ds, 5, &per_column()).unwrap();
    let mut f = t.ordered_features();
    f.sort_unstable();
    assert_eq!(f, vec![0, 1, 2, 3, 4]);
    assert_eq!(t.deviance.len(), 5);
}

#[test]
fn single_class_data_is_rejected() {
    let rows = vec![vec![0.1], vec![0.4], vec![0.9]];
    let ds = Dataset::new(vec!["x".into()], &rows, vec![1, 1, 1]).unwrap();
    assert!(forward_stepwise(&ds, 1, &SelectionConfig::default()).is_err());
}
