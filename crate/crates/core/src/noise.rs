//! AUC of a score after additive Gaussian noise, and empirical estimation
//! of the noise ratio for a simple rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::metrics::auc;

fn std_normal() -> StdNormal {
    StdNormal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `Φ(Φ⁻¹(auc_y) / √(1 + γ))`: the AUC of a binormal equal-variance score
/// after adding independent noise with variance `γ σ²`.
pub fn auc_under_noise(auc_y: f64, gamma: f64) -> Result<f64> {
    if !(auc_y > 0.0 && auc_y < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "auc_y = {auc_y} must lie strictly inside (0, 1)"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {gamma} must be >= 0"
        )));
    }
    if gamma == 0.0 {
        return Ok(auc_y);
    }
    if gamma.is_infinite() {
        return Ok(0.5);
    }
    Ok(phi(phi_inv(auc_y) / (1.0 + gamma).sqrt()))
}

/// Class-conditional summary of true scores plus the noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mu_p: f64,
    pub mu_n: f64,
    pub sigma: f64,
    pub sigma_eps: f64,
    pub gamma: f64,
}

impl ScoreModel {
    /// AUC the binormal model assigns to the true score.
    pub fn auc_true(&self) -> f64 {
        phi((self.mu_p - self.mu_n) / (std::f64::consts::SQRT_2 * self.sigma))
    }

    pub fn auc_noisy(&self) -> f64 {
        phi((self.mu_p - self.mu_n)
            / (std::f64::consts::SQRT_2 * self.sigma * (1.0 + self.gamma).sqrt()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinClassVariance {
    /// Mean of the two class variances, matching the equal-variance model.
    #[default]
    Unweighted,
    /// Class variances weighted by class size.
    Pooled,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var)
}

/// Maps simple scores back to the logit scale (divide by `scale_factor`),
/// takes the centered difference from the true scores as noise, and divides
/// its variance by the within-class variance of the true scores.
pub fn estimate_gamma(
    true_scores: &[f64],
    simple_scores: &[f64],
    scale_factor: f64,
    labels: &[u8],
    variance: WithinClassVariance,
) -> Result<ScoreModel> {
    let n = true_scores.len();
    if simple_scores.len() != n || labels.len() != n {
        return Err(Error::InvalidArgument(
            "score and label lengths differ".into(),
        ));
    }
    if !(scale_factor > 0.0 && scale_factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale factor {scale_factor} must be positive and finite"
        )));
    }
    let pos: Vec<f64> = (0..n)
        .filter(|&i| labels[i] == 1)
        .map(|i| true_scores[i])
        .collect();
    let neg: Vec<f64> = (0..n)
        .filter(|&i| labels[i] == 0)
        .map(|i| true_scores[i])
        .collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::InvalidArgument(
            "each class needs at least two rows".into(),
        ));
    }
    let (mu_p, var_p) = mean_var(&pos);
    let (mu_n, var_n) = mean_var(&neg);
    let sigma2 = match variance {
        WithinClassVariance::Unweighted => 0.5 * (var_p + var_n),
        WithinClassVariance::Pooled => {
            (var_p * pos.len() as f64 + var_n * neg.len() as f64) / n as f64
        }
    };
    // Rounding residue relative to the spread of all scores counts as zero.
    let (_, total) = mean_var(true_scores);
    if !(sigma2 > 1e-12 * total) || sigma2 == 0.0 {
        return Err(Error::Numerical(
            "zero within-class variance of true scores".into(),
        ));
    }
    let diff: Vec<f64> = (0..n)
        .map(|i| simple_scores[i] / scale_factor - true_scores[i])
        .collect();
    let (_, eps2) = mean_var(&diff);
    Ok(ScoreModel {
        mu_p,
        mu_n,
        sigma: sigma2.sqrt(),
        sigma_eps: eps2.sqrt(),
        gamma: eps2 / sigma2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub empirical: f64,
    pub analytic: f64,
    pub abs_diff: f64,
}

/// Draws `n` positives and `n` negatives from unit-variance normals whose
/// mean gap gives true AUC `auc_target`, adds `N(0, γ)` noise, and compares
/// the empirical AUC with the closed form.
pub fn verify_theorem_mc(auc_target: f64, gamma: f64, n: usize, seed: u64) -> Result<TheoremCheck> {
    if n < 1000 {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be at least 1000"
        )));
    }
    let analytic = auc_under_noise(auc_target, gamma)?;
    let sigma = 1.0;
    let gap = std::f64::consts::SQRT_2 * sigma * phi_inv(auc_target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(gap / 2.0, sigma).expect("finite");
    let neg = Normal::new(-gap / 2.0, sigma).expect("finite");
    let eps = Normal::new(0.0, sigma * gamma.sqrt()).expect("finite");
    let mut scores = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for _ in 0..n {
        scores.push(pos.sample(&mut rng) + eps.sample(&mut rng));
        labels.push(1);
        scores.push(neg.sample(&mut rng) + eps.sample(&mut rng));
        labels.push(0);
    }
    let empirical = auc(&scores, &labels)?;
    Ok(TheoremCheck {
        empirical,
        analytic,
        abs_diff: (empirical - analytic).abs(),
    })
}

/// Closed-form AUC over a grid, row-major in `auc_values`.
pub fn theory_grid(auc_values: &[f64], gammas: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(auc_values.len() * gammas.len());
    for &a in auc_values {
        for &g in gammas {
            out.push((a, g, auc_under_noise(a, g)?));
        }
    }
    Ok(out)
}
