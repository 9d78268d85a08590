//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use simplerules::data::Dataset;
use simplerules::glm::{log_likelihood, sigmoid};

/// Maximizes a concave function of one variable on `[lo, hi]` by golden
/// section.
fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..iters {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    let m = 0.5 * (lo + hi);
    (m, f(m))
}

/// Direct maximization of the log-likelihood for intercept + two features:
/// a coarse grid locates the bracket, nested golden-section refines it.
pub fn direct_mle(x: &DMatrix<f64>, y: &[u8]) -> [f64; 3] {
    let ll = |b: [f64; 3]| log_likelihood(x, y, b[0], &[b[1], b[2]]);
    let mut best = ([0.0; 3], f64::NEG_INFINITY);
    for i in -10..=10 {
        for j in -10..=10 {
            for k in -10..=10 {
                let b = [i as f64 * 0.5, j as f64 * 0.5, k as f64 * 0.5];
                let v = ll(b);
                if v > best.1 {
                    best = (b, v);
                }
            }
        }
    }
    let c = best.0;
    let w = 1.0;
    let inner = |b1: f64, b2: f64| golden_max(&|b0| ll([b0, b1, b2]), c[0] - w, c[0] + w, 70);
    let middle = |b1: f64| golden_max(&|b2| inner(b1, b2).1, c[2] - w, c[2] + w, 70);
    let (b1, _) = golden_max(&|b1| middle(b1).1, c[1] - w, c[1] + w, 70);
    let (b2, _) = middle(b1);
    let (b0, _) = inner(b1, b2);
    [b0, b1, b2]
}

pub fn random_instance(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta: Vec<f64> = (0..p).map(|j| 0.8 - 0.4 * j as f64).collect();
    let y = (0..n)
        .map(|i| {
            let eta: f64 = -0.3 + (0..p).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
            u8::from(rng.gen::<f64>() < sigmoid(eta))
        })
        .collect();
    (x, y)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
pub fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

/// `n` rows of `p` uniform features with a random logistic signal; both
/// classes are always present.
pub fn continuous_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta: f64 = x.iter().zip(&coef).map(|(a, b)| a * b).sum();
        y.push(u8::from(rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp())));
        rows.push(x);
    }
    if !y.contains(&0) {
        y[0] = 0;
    }
    if !y.contains(&1) {
        y[0] = 1;
    }
    Dataset::new((0..p).map(|j| format!("x{j}")).collect(), &rows, y).unwrap()
}
