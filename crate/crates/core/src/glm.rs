//! Logistic regression: unregularized maximum likelihood by iteratively
//! reweighted least squares, and an L1-regularized path by coordinate
//! descent with cross-validated choice of the penalty.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FoldAssignment;
use crate::error::GlmError;

/// Linear predictors beyond this magnitude mean fitted probabilities are
/// numerically 0 or 1.
const SATURATED_ETA: f64 = 40.0;
/// Minimum IRLS weight in the lasso's quadratic approximation.
const MIN_WEIGHT: f64 = 1e-5;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(1 + e^t) without overflow.
pub fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[u8]) -> Result<(), GlmError> {
    if y.len() != x.nrows() {
        return Err(GlmError::Dimension {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(GlmError::InvalidArgument("no observations".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(GlmError::InvalidArgument("labels must be 0 or 1".into()));
    }
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !x[(i, j)].is_finite() {
                return Err(GlmError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn class_count(y: &[u8]) -> usize {
    y.iter().filter(|&&v| v == 1).count()
}

/// Bernoulli log-likelihood of `y` under `logit^{-1}(intercept + x·coefs)`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &[u8], intercept: f64, coefs: &[f64]) -> f64 {
    let eta = linear_predictors(x, intercept, coefs);
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| f64::from(yi) * e - log1p_exp(e))
        .sum()
}

/// Gradient of [`log_likelihood`]: `(d/d intercept, d/d coefs)`.
pub fn log_likelihood_gradient(
    x: &DMatrix<f64>,
    y: &[u8],
    intercept: f64,
    coefs: &[f64],
) -> (f64, Vec<f64>) {
    let eta = linear_predictors(x, intercept, coefs);
    let resid: Vec<f64> = eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| f64::from(yi) - sigmoid(e))
        .collect();
    let g0 = resid.iter().sum();
    let g = (0..x.ncols())
        .map(|j| x.column(j).iter().zip(&resid).map(|(a, r)| a * r).sum())
        .collect();
    (g0, g)
}

fn linear_predictors(x: &DMatrix<f64>, intercept: f64, coefs: &[f64]) -> Vec<f64> {
    let mut eta = vec![intercept; x.nrows()];
    for (j, &b) in coefs.iter().enumerate() {
        if b != 0.0 {
            for (e, &v) in eta.iter_mut().zip(x.column(j).iter()) {
                *e += b * v;
            }
        }
    }
    eta
}

/// A fitted logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Standard errors from the inverse Fisher information, intercept first.
    /// Only set by the unpenalized fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
}

impl GlmFit {
    pub fn deviance(&self) -> f64 {
        -2.0 * self.log_likelihood
    }

    /// Linear score on the logit scale.
    pub fn linear_score(&self, x: &[f64]) -> Result<f64, GlmError> {
        if x.len() != self.coefficients.len() {
            return Err(GlmError::Dimension {
                expected: self.coefficients.len(),
                found: x.len(),
            });
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>())
    }

    pub fn predict_prob(&self, x: &[f64]) -> Result<f64, GlmError> {
        self.linear_score(x).map(sigmoid)
    }

    pub fn linear_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>, GlmError> {
        if x.ncols() != self.coefficients.len() {
            return Err(GlmError::Dimension {
                expected: self.coefficients.len(),
                found: x.ncols(),
            });
        }
        Ok(linear_predictors(x, self.intercept, &self.coefficients))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }
}

/// `logit^{-1}(intercept + coefs·x)`.
pub fn predict_prob(fit: &GlmFit, x: &[f64]) -> Result<f64, GlmError> {
    fit.predict_prob(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            max_iter: 100,
            tol: 1e-7,
        }
    }
}

/// Maximum-likelihood logistic regression with an unpenalized intercept.
///
/// Newton/IRLS steps are halved until the log-likelihood does not decrease.
/// Converged means the largest coefficient change fell below `tol`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[u8], cfg: &IrlsConfig) -> Result<GlmFit, GlmError> {
    check_inputs(x, y)?;
    let n = x.nrows();
    let p = x.ncols();
    let pos = class_count(y);
    if pos == 0 || pos == n {
        return Err(GlmError::SingleClass);
    }
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
    let mut xa = DMatrix::zeros(n, p + 1);
    xa.column_mut(0).fill(1.0);
    xa.columns_mut(1, p).copy_from(x);

    let mut beta = DVector::zeros(p + 1);
    beta[0] = logit(pos as f64 / n as f64);
    let loglik = |b: &DVector<f64>| -> (f64, DVector<f64>) {
        let eta = &xa * b;
        let ll = eta
            .iter()
            .zip(yv.iter())
            .map(|(&e, &yi)| yi * e - log1p_exp(e))
            .sum();
        (ll, eta)
    };
    let (mut ll, mut eta) = loglik(&beta);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let grad = xa.tr_mul(&(&yv - &mu));
        let mut xw = xa.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i].sqrt();
        }
        let max_eta = eta.amax();
        let step = match solve_scaled(xw.tr_mul(&xw), &grad) {
            Some(s) => s,
            None if max_eta > 15.0 => {
                return Err(GlmError::Separation {
                    max_eta,
                    deviance: -2.0 * ll,
                })
            }
            None => return Err(GlmError::Singular),
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let (cll, ceta) = loglik(&cand);
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cll, ceta));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cll, ceta)) = accepted else {
            // No ascent direction left: we are at the optimum to machine precision.
            converged = true;
            break;
        };
        let change = (&cand - &beta).amax();
        beta = cand;
        ll = cll;
        eta = ceta;
        if eta.amax() > SATURATED_ETA {
            return Err(GlmError::Separation {
                max_eta: eta.amax(),
                deviance: -2.0 * ll,
            });
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged && eta.amax() > 15.0 {
        return Err(GlmError::Separation {
            max_eta: eta.amax(),
            deviance: -2.0 * ll,
        });
    }
    // Fisher information at the final estimate.
    let mu = eta.map(sigmoid);
    let mut xw = xa.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= (mu[i] * (1.0 - mu[i])).sqrt();
    }
    let info = xw.tr_mul(&xw);
    let std_errors = info
        .cholesky()
        .map(|c| c.inverse().diagonal().iter().map(|v| v.sqrt()).collect());
    Ok(GlmFit {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        converged,
        iterations,
        log_likelihood: ll,
        std_errors,
    })
}

/// Solves `h · s = g` for symmetric positive definite `h` after unit-diagonal
/// scaling. `None` when `h` is singular to working precision.
fn solve_scaled(mut h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let d: Vec<f64> = h.diagonal().iter().map(|v| v.sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let m = h.nrows();
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] /= d[i] * d[j];
        }
    }
    let chol = h.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..m).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot < 1e-12 {
        return None;
    }
    let gs = DVector::from_iterator(m, g.iter().zip(&d).map(|(a, b)| a / b));
    let s = chol.solve(&gs);
    let out = DVector::from_iterator(m, s.iter().zip(&d).map(|(a, b)| a / b));
    out.iter().all(|v| v.is_finite()).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub tol: f64,
    /// Cap on coordinate sweeps per penalty value.
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

/// Cross-validated mean and standard error of held-out deviance per penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Lasso fits over a decreasing penalty grid. Coefficients are on the
/// original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambda_grid: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    /// Training deviance (−2 log-likelihood) per penalty.
    pub train_deviance: Vec<f64>,
    pub converged: Vec<bool>,
    /// Column means and population standard deviations used for the penalty.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(default)]
    pub cv_error: Option<CvCurve>,
    #[serde(default)]
    pub selected_lambda: Option<usize>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambda_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_grid.is_empty()
    }

    pub fn fit_at(&self, idx: usize) -> GlmFit {
        GlmFit {
            intercept: self.intercepts[idx],
            coefficients: self.coefficients[idx].clone(),
            converged: self.converged[idx],
            iterations: 0,
            log_likelihood: -0.5 * self.train_deviance[idx],
            std_errors: None,
        }
    }

    /// The fit at `selected_lambda`, if cross-validation has run.
    pub fn selected_fit(&self) -> Option<GlmFit> {
        self.selected_lambda.map(|i| self.fit_at(i))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path serializes")
    }

    /// Largest violation of the lasso optimality conditions at grid index
    /// `idx`, on the standardized scale: zero coefficients need
    /// `|gradient| <= lambda`, nonzero ones need `gradient = lambda·sign`.
    pub fn kkt_violation(&self, x: &DMatrix<f64>, y: &[u8], idx: usize) -> f64 {
        let n = x.nrows() as f64;
        let lambda = self.lambda_grid[idx];
        let eta = linear_predictors(x, self.intercepts[idx], &self.coefficients[idx]);
        let resid: Vec<f64> = eta
            .iter()
            .zip(y)
            .map(|(&e, &yi)| f64::from(yi) - sigmoid(e))
            .collect();
        let mut worst: f64 = (resid.iter().sum::<f64>() / n).abs();
        for j in 0..x.ncols() {
            if self.scale[j] == 0.0 {
                continue;
            }
            let g = x
                .column(j)
                .iter()
                .zip(&resid)
                .map(|(v, r)| (v - self.center[j]) / self.scale[j] * r)
                .sum::<f64>()
                / n;
            let b = self.coefficients[idx][j];
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Design rows standardized for the penalty. Identical `(x, y)` rows are
/// merged and carried as counts, which leaves the likelihood unchanged and
/// makes indicator-coded designs much cheaper.
struct Standardized {
    /// Column-major standardized values, `n * p` over the distinct rows.
    values: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Multiplicity of each distinct row.
    counts: Vec<f64>,
    /// Responses of the distinct rows.
    y: Vec<f64>,
    /// Number of original rows.
    total: f64,
    n: usize,
    p: usize,
}

/// Indices of the first occurrence of each distinct `(x, y)` row and the
/// multiplicities, in first-seen order.
fn distinct_rows(x: &DMatrix<f64>, y: &[u8]) -> (Vec<usize>, Vec<f64>) {
    let (n, p) = x.shape();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n.min(1024));
    let mut first = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut key: Vec<u64> = (0..p).map(|j| (x[(i, j)] + 0.0).to_bits()).collect();
        key.push(u64::from(y[i]));
        match seen.get(&key) {
            Some(&k) => counts[k] += 1.0,
            None => {
                seen.insert(key, first.len());
                first.push(i);
                counts.push(1.0);
            }
        }
    }
    (first, counts)
}

impl Standardized {
    fn new(x: &DMatrix<f64>, y: &[u8]) -> Self {
        let (rows, counts) = distinct_rows(x, y);
        let (n, p) = (rows.len(), x.ncols());
        let total = x.nrows() as f64;
        let mut values = vec![0.0; n * p];
        let mut center = vec![0.0; p];
        let mut scale = vec![0.0; p];
        for j in 0..p {
            let col: Vec<f64> = rows.iter().map(|&i| x[(i, j)]).collect();
            let mean = col.iter().zip(&counts).map(|(v, c)| c * v).sum::<f64>() / total;
            let var = col
                .iter()
                .zip(&counts)
                .map(|(v, c)| c * (v - mean).powi(2))
                .sum::<f64>()
                / total;
            let sd = var.sqrt();
            center[j] = mean;
            // Constant columns never enter the model.
            scale[j] = if sd > 1e-12 * mean.abs().max(1.0) {
                sd
            } else {
                0.0
            };
            if scale[j] > 0.0 {
                for (i, v) in col.iter().enumerate() {
                    values[j * n + i] = (v - mean) / sd;
                }
            }
        }
        Standardized {
            values,
            center,
            scale,
            y: rows.iter().map(|&i| f64::from(y[i])).collect(),
            counts,
            total,
            n,
            p,
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    fn ybar(&self) -> f64 {
        self.y
            .iter()
            .zip(&self.counts)
            .map(|(y, c)| c * y)
            .sum::<f64>()
            / self.total
    }

    fn lambda_max(&self) -> f64 {
        let ybar = self.ybar();
        (0..self.p)
            .map(|j| {
                (self
                    .col(j)
                    .iter()
                    .zip(&self.y)
                    .zip(&self.counts)
                    .map(|((v, yi), c)| c * v * (yi - ybar))
                    .sum::<f64>()
                    / self.total)
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    fn eta(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, v) in eta.iter_mut().zip(self.col(j)) {
                    *e += b * v;
                }
            }
        }
        eta
    }

    /// Sum over original rows of the log-likelihood at `eta`.
    fn loglik(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .zip(&self.counts)
            .map(|((&e, &yi), c)| c * (yi * e - log1p_exp(e)))
            .sum()
    }

    /// Mean negative log-likelihood plus the L1 penalty.
    fn objective(&self, b0: f64, beta: &[f64], lambda: f64) -> f64 {
        -self.loglik(&self.eta(b0, beta)) / self.total
            + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn to_original(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut icpt = b0;
        let coefs = (0..self.p)
            .map(|j| {
                if self.scale[j] == 0.0 {
                    0.0
                } else {
                    let c = beta[j] / self.scale[j];
                    icpt -= c * self.center[j];
                    c
                }
            })
            .collect();
        (icpt, coefs)
    }
}

/// Dot product with independent partial sums, which the compiler can keep
/// in vector registers.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Proximal-Newton solve of one penalty value, warm-started from
/// `(b0, beta)`. Returns whether it converged.
///
/// Each quadratic subproblem runs coordinate descent in covariance form:
/// the gradient is updated through weighted Gram columns, computed only
/// for coordinates that move.
fn solve_one(
    s: &Standardized,
    lambda: f64,
    b0: &mut f64,
    beta: &mut [f64],
    cfg: &LassoConfig,
) -> bool {
    let (n, p) = (s.n, s.p);
    let nf = s.total;
    let y = &s.y;
    let mut sweeps = 0usize;
    let outer_tol = cfg.tol * 10.0;
    let mut obj = s.objective(*b0, beta, lambda);
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    // Coordinate 0 is the intercept; coordinate j + 1 is feature j.
    let mut grad = vec![0.0; p + 1];
    let mut diag = vec![0.0; p + 1];
    let mut gram: Vec<Option<Vec<f64>>> = vec![None; p + 1];
    let column = |k: usize| -> Option<&[f64]> { (k > 0).then(|| s.col(k - 1)) };
    for _outer in 0..200 {
        let eta = s.eta(*b0, beta);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let v = (mu * (1.0 - mu)).max(MIN_WEIGHT);
            z[i] = (y[i] - mu) / v;
            w[i] = s.counts[i] * v;
        }
        let wz: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a * b).collect();
        grad[0] = wz.iter().sum::<f64>() / nf;
        diag[0] = w.iter().sum::<f64>() / nf;
        for j in 0..p {
            if s.scale[j] == 0.0 {
                grad[j + 1] = 0.0;
                diag[j + 1] = 0.0;
                continue;
            }
            let col = s.col(j);
            let wv: Vec<f64> = col.iter().zip(&w).map(|(v, wi)| v * wi).collect();
            grad[j + 1] = dot(col, &wz) / nf;
            diag[j + 1] = dot(col, &wv) / nf;
        }
        gram.iter_mut().for_each(|g| *g = None);
        let old_b0 = *b0;
        let old_beta = beta.to_vec();

        // Moves coordinate `k` by `d`, updating every gradient entry.
        let shift = |k: usize, d: f64, grad: &mut [f64], gram: &mut Vec<Option<Vec<f64>>>| {
            if gram[k].is_none() {
                let wk: Vec<f64> = match column(k) {
                    Some(col) => col.iter().zip(&w).map(|(v, wi)| v * wi).collect(),
                    None => w.clone(),
                };
                let mut out = vec![0.0; p + 1];
                for j in 0..=p {
                    out[j] = match &gram[j] {
                        Some(gj) => gj[k],
                        None if j == 0 => wk.iter().sum::<f64>() / nf,
                        None if s.scale[j - 1] != 0.0 => dot(s.col(j - 1), &wk) / nf,
                        None => 0.0,
                    };
                }
                gram[k] = Some(out);
            }
            let gk = gram[k].as_ref().expect("filled above");
            for (g, h) in grad.iter_mut().zip(gk) {
                *g -= d * h;
            }
        };

        // Cycle over the active set between full sweeps.
        let mut full = true;
        loop {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            let d0 = grad[0] / diag[0];
            if d0 != 0.0 {
                *b0 += d0;
                shift(0, d0, &mut grad, &mut gram);
                max_change = max_change.max(d0.abs() * diag[0].sqrt());
            }
            for j in 0..p {
                let xv = diag[j + 1];
                if xv == 0.0 || (!full && beta[j] == 0.0) {
                    continue;
                }
                let g = grad[j + 1] + xv * beta[j];
                let new = soft_threshold(g, lambda) / xv;
                let d = new - beta[j];
                if d != 0.0 {
                    beta[j] = new;
                    shift(j + 1, d, &mut grad, &mut gram);
                    max_change = max_change.max(d.abs() * xv.sqrt());
                }
            }
            if max_change < cfg.tol {
                if full {
                    break;
                }
                full = true;
            } else {
                full = false;
            }
            if sweeps >= cfg.max_sweeps {
                break;
            }
        }

        // Backtrack towards the previous iterate if the quadratic model
        // overshot.
        let mut new_obj = s.objective(*b0, beta, lambda);
        let target_b0 = *b0;
        let target = beta.to_vec();
        let mut t = 1.0;
        while new_obj > obj + 1e-12 * obj.abs() && t > 1e-6 {
            t *= 0.5;
            *b0 = old_b0 + t * (target_b0 - old_b0);
            for j in 0..p {
                beta[j] = old_beta[j] + t * (target[j] - old_beta[j]);
            }
            new_obj = s.objective(*b0, beta, lambda);
        }
        if new_obj > obj + 1e-12 * obj.abs() {
            *b0 = old_b0;
            beta.copy_from_slice(&old_beta);
            return true;
        }
        obj = new_obj;
        let change = beta
            .iter()
            .zip(&old_beta)
            .map(|(a, b)| (a - b).abs())
            .fold((*b0 - old_b0).abs(), f64::max);
        if change < outer_tol {
            return true;
        }
        if sweeps >= cfg.max_sweeps {
            return false;
        }
    }
    false
}

fn lambda_grid(lambda_max: f64, cfg: &LassoConfig) -> Vec<f64> {
    let m = cfg.n_lambda;
    if m == 1 {
        return vec![lambda_max];
    }
    (0..m)
        .map(|k| lambda_max * cfg.lambda_min_ratio.powf(k as f64 / (m - 1) as f64))
        .collect()
}

fn validate_lasso_args(cfg: &LassoConfig) -> Result<(), GlmError> {
    if cfg.n_lambda == 0 {
        return Err(GlmError::InvalidArgument(
            "n_lambda must be positive".into(),
        ));
    }
    if !(cfg.lambda_min_ratio > 0.0 && cfg.lambda_min_ratio < 1.0) {
        return Err(GlmError::InvalidArgument(
            "lambda_min_ratio must lie in (0, 1)".into(),
        ));
    }
    if !(cfg.tol > 0.0) {
        return Err(GlmError::InvalidArgument("tol must be positive".into()));
    }
    Ok(())
}

fn fit_on_grid(s: &Standardized, grid: &[f64], cfg: &LassoConfig) -> Result<LassoPath, GlmError> {
    let null_b0 = logit(s.ybar());
    let lmax = s.lambda_max();
    let mut b0 = null_b0;
    let mut beta = vec![0.0; s.p];
    let mut path = LassoPath {
        lambda_grid: grid.to_vec(),
        intercepts: Vec::with_capacity(grid.len()),
        coefficients: Vec::with_capacity(grid.len()),
        train_deviance: Vec::with_capacity(grid.len()),
        converged: Vec::with_capacity(grid.len()),
        center: s.center.clone(),
        scale: s.scale.clone(),
        cv_error: None,
        selected_lambda: None,
    };
    for &lambda in grid {
        let ok = if lambda >= lmax {
            // The null model solves every penalty at or above lambda_max.
            b0 = null_b0;
            beta.iter_mut().for_each(|b| *b = 0.0);
            true
        } else {
            solve_one(s, lambda, &mut b0, &mut beta, cfg)
        };
        let (icpt, coefs) = s.to_original(b0, &beta);
        let dev = -2.0 * s.loglik(&s.eta(b0, &beta));
        path.intercepts.push(icpt);
        path.coefficients.push(coefs);
        path.train_deviance.push(dev);
        path.converged.push(ok);
    }
    Ok(path)
}

/// Lasso-penalized logistic regression over a log-spaced grid from
/// `lambda_max` down to `lambda_max * lambda_min_ratio`.
///
/// Features are standardized to unit variance for the penalty; the intercept
/// is not penalized.
pub fn fit_lasso_path(
    x: &DMatrix<f64>,
    y: &[u8],
    cfg: &LassoConfig,
) -> Result<LassoPath, GlmError> {
    validate_lasso_args(cfg)?;
    check_inputs(x, y)?;
    if x.nrows() < 2 {
        return Err(GlmError::InvalidArgument("need at least two rows".into()));
    }
    let pos = class_count(y);
    if pos == 0 || pos == y.len() {
        return Err(GlmError::SingleClass);
    }
    let s = Standardized::new(x, y);
    let lmax = s.lambda_max().max(f64::MIN_POSITIVE);
    fit_on_grid(&s, &lambda_grid(lmax, cfg), cfg)
}

fn heldout_deviance(x: &DMatrix<f64>, y: &[u8], rows: &[usize], icpt: f64, coefs: &[f64]) -> f64 {
    let mut total = 0.0;
    for &i in rows {
        let mut e = icpt;
        for (j, &b) in coefs.iter().enumerate() {
            e += b * x[(i, j)];
        }
        let p = sigmoid(e).clamp(1e-15, 1.0 - 1e-15);
        total += if y[i] == 1 {
            -2.0 * p.ln()
        } else {
            -2.0 * (1.0 - p).ln()
        };
    }
    total / rows.len() as f64
}

/// Fits the full path, then scores every penalty by K-fold held-out mean
/// deviance. `selected_lambda` is the minimizer; ties go to the larger
/// penalty.
pub fn cv_select(
    x: &DMatrix<f64>,
    y: &[u8],
    folds: &FoldAssignment,
    cfg: &LassoConfig,
) -> Result<LassoPath, GlmError> {
    if folds.len() != x.nrows() {
        return Err(GlmError::Dimension {
            expected: x.nrows(),
            found: folds.len(),
        });
    }
    let mut path = fit_lasso_path(x, y, cfg)?;
    let k = folds.fold_count();
    for f in 0..k {
        let test = folds.test_indices(f);
        let pos = test.iter().filter(|&&i| y[i] == 1).count();
        if pos == 0 || pos == test.len() {
            return Err(GlmError::FoldMissingClass { fold: f });
        }
    }
    let grid = path.lambda_grid.clone();
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = folds.train_indices(f);
            let test = folds.test_indices(f);
            let xt = x.select_rows(train.iter());
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let pos = class_count(&yt);
            if pos == 0 || pos == yt.len() {
                return Err(GlmError::FoldMissingClass { fold: f });
            }
            let fp = fit_on_grid(&Standardized::new(&xt, &yt), &grid, cfg)?;
            Ok((0..grid.len())
                .map(|l| heldout_deviance(x, y, &test, fp.intercepts[l], &fp.coefficients[l]))
                .collect())
        })
        .collect::<Result<_, GlmError>>()?;
    let kf = k as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for l in 0..grid.len() {
        let m = per_fold.iter().map(|v| v[l]).sum::<f64>() / kf;
        let var = per_fold.iter().map(|v| (v[l] - m).powi(2)).sum::<f64>() / (kf - 1.0);
        mean.push(m);
        se.push((var / kf).sqrt());
    }
    let mut best = 0;
    for l in 1..mean.len() {
        if mean[l] < mean[best] {
            best = l;
        }
    }
    path.cv_error = Some(CvCurve {
        mean,
        std_error: se,
    });
    path.selected_lambda = Some(best);
    Ok(path)
}
