use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use simplerules::noise::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn noise_pulls_auc_towards_one_half(a in 0.01f64..0.99, g in 0.0f64..20.0, dg in 0.01f64..5.0) {
        let lo = auc_under_noise(a, g).unwrap();
        let hi = auc_under_noise(a, g + dg).unwrap();
        if a > 0.5 + 1e-9 {
            prop_assert!(hi < lo);
            prop_assert!(hi > 0.5);
        } else if a < 0.5 - 1e-9 {
            prop_assert!(hi > lo);
            prop_assert!(hi < 0.5);
        }
    }

    #[test]
    fn huge_noise_gives_chance(a in 0.001f64..0.999) {
        prop_assert!((auc_under_noise(a, 1e12).unwrap() - 0.5).abs() < 1e-5);
        prop_assert_eq!(auc_under_noise(a, f64::INFINITY).unwrap(), 0.5);
    }
}

/// Standard error of an empirical AUC with `m` positives and `n`
/// negatives (Hanley-McNeil).
fn auc_se(a: f64, m: f64, n: f64) -> f64 {
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    ((a * (1.0 - a) + (m - 1.0) * (q1 - a * a) + (n - 1.0) * (q2 - a * a)) / (m * n)).sqrt()
}

#[test]
fn monte_carlo_agrees_with_the_closed_form_across_a_grid() {
    let n = 20_000;
    let mut seed = 0;
    for a in [0.6, 0.75, 0.9, 0.97] {
        for g in [0.0, 0.2, 0.5, 1.0, 3.0] {
            seed += 1;
            let c = verify_theorem_mc(a, g, n, seed).unwrap();
            let se = auc_se(c.analytic, n as f64, n as f64);
            assert!(c.abs_diff <= 3.0 * se, "a={a} g={g}: {c:?} se={se}");
        }
    }
}

#[test]
fn published_and_sanity_points() {
    let c = verify_theorem_mc(0.9, 0.5, 100_000, 1).unwrap();
    assert!((c.empirical - 0.852).abs() <= 0.01, "{c:?}");
    let c = verify_theorem_mc(0.8, 0.0, 100_000, 2).unwrap();
    assert!((c.empirical - 0.8).abs() <= 0.01, "{c:?}");
    let c = verify_theorem_mc(0.75, 1.0, 100_000, 3).unwrap();
    let expect = phi(phi_inv(0.75) / 2f64.sqrt());
    assert!((c.empirical - expect).abs() <= 0.01, "{c:?}");
}

#[test]
fn injected_noise_ratio_is_recovered() {
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let eps = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let mut truth = Vec::with_capacity(n);
    let mut simple = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let scale = 2.5;
    for i in 0..n {
        let y = u8::from(i % 2 == 0);
        let t = if y == 1 { 1.0 } else { -1.0 } + unit.sample(&mut rng);
        truth.push(t);
        // An arbitrary offset stands in for the dropped intercept.
        simple.push(scale * (t + eps.sample(&mut rng) + 4.0));
        labels.push(y);
    }
    let m = estimate_gamma(
        &truth,
        &simple,
        scale,
        &labels,
        WithinClassVariance::Unweighted,
    )
    .unwrap();
    assert!((m.gamma - 0.5).abs() <= 0.05, "{m:?}");
    let pooled =
        estimate_gamma(&truth, &simple, scale, &labels, WithinClassVariance::Pooled).unwrap();
    assert!((pooled.gamma - 0.5).abs() <= 0.05, "{pooled:?}");
    assert!(estimate_gamma(
        &truth,
        &simple,
        0.0,
        &labels,
        WithinClassVariance::Unweighted
    )
    .is_err());
}

#[test]
fn theory_grid_is_row_major() {
    let g = theory_grid(&[0.7, 0.9], &[0.0, 1.0]).unwrap();
    assert_eq!(g.len(), 4);
    assert_eq!((g[0].0, g[0].1, g[0].2), (0.7, 0.0, 0.7));
    assert_eq!((g[3].0, g[3].1), (0.9, 1.0));
    assert!(g[3].2 < 0.9);
}
