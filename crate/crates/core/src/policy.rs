//! Offline evaluation of release policies: response-surface estimates of
//! the adverse-outcome rate, and their sensitivity to a hidden binary
//! covariate that shifts both the decision and the outcome.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_kfold, Action, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::glm::{cv_select, logit, sigmoid, GlmFit, LassoConfig};
use crate::srr::{decide_at, Scorecard};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]` before any
/// logit.
pub const PROB_FLOOR: f64 = 1e-6;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// One observed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub x: Vec<f64>,
    pub action: Action,
    pub outcome: u8,
    pub group: Option<String>,
    /// `(r(release), r(withhold))`, known only for synthetic data.
    pub potential: Option<(u8, u8)>,
}

/// Cases sharing a feature layout. Outcomes live in the label column.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSet {
    ds: Dataset,
}

impl CaseSet {
    pub fn from_dataset(ds: Dataset) -> Result<Self> {
        let actions = ds
            .actions()
            .ok_or_else(|| Error::Policy("cases need an action column".into()))?;
        if let Some(po) = ds.potential_outcomes() {
            for (i, (&a, &(rr, rw))) in actions.iter().zip(po).enumerate() {
                let expect = if a == Action::Release { rr } else { rw };
                if expect != ds.labels()[i] {
                    return Err(Error::Policy(format!(
                        "row {i}: observed outcome differs from the potential outcome of the taken action"
                    )));
                }
            }
        }
        Ok(CaseSet { ds })
    }

    pub fn from_records(feature_names: Vec<String>, records: &[CaseRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Policy("no cases".into()));
        }
        let rows: Vec<Vec<f64>> = records.iter().map(|r| r.x.clone()).collect();
        let labels = records.iter().map(|r| r.outcome).collect();
        let mut ds = Dataset::new(feature_names, &rows, labels)?
            .with_actions("action", records.iter().map(|r| r.action).collect())?;
        if records.iter().all(|r| r.group.is_some()) {
            ds = ds.with_group_ids(
                "group",
                records
                    .iter()
                    .map(|r| r.group.clone().unwrap_or_default())
                    .collect(),
            )?;
        }
        if records.iter().all(|r| r.potential.is_some()) {
            ds = ds.with_potential_outcomes(
                records
                    .iter()
                    .map(|r| r.potential.unwrap_or_default())
                    .collect(),
            )?;
        }
        Self::from_dataset(ds)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn len(&self) -> usize {
        self.ds.n()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.n() == 0
    }

    pub fn actions(&self) -> &[Action] {
        self.ds.actions().expect("checked at construction")
    }

    pub fn outcomes(&self) -> &[u8] {
        self.ds.labels()
    }

    pub fn record(&self, i: usize) -> CaseRecord {
        CaseRecord {
            x: self.ds.row(i),
            action: self.actions()[i],
            outcome: self.outcomes()[i],
            group: self.ds.group_ids().map(|g| g[i].clone()),
            potential: self.ds.potential_outcomes().map(|p| p[i]),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Ok(CaseSet {
            ds: self.ds.subset(idx)?,
        })
    }

    pub fn release_rate(&self) -> f64 {
        let r = self
            .actions()
            .iter()
            .filter(|&&a| a == Action::Release)
            .count();
        r as f64 / self.len() as f64
    }

    pub fn outcome_rate(&self) -> f64 {
        self.outcomes().iter().map(|&o| f64::from(o)).sum::<f64>() / self.len() as f64
    }
}

/// A decision rule over case covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Release iff the card's score is below its threshold.
    Scorecard(Scorecard),
    /// Release iff the model's predicted risk is below `threshold`.
    Risk {
        model: GlmFit,
        columns: Vec<String>,
        threshold: f64,
    },
    Constant(Action),
    /// Decisions fixed in advance, one per case (e.g. the observed actions).
    Fixed(Vec<Action>),
}

impl Policy {
    pub fn actions(&self, cases: &CaseSet) -> Result<Vec<Action>> {
        let ds = cases.dataset();
        match self {
            Policy::Scorecard(card) => {
                let t = card
                    .threshold
                    .ok_or_else(|| Error::Scorecard("threshold not set".into()))?;
                Ok(card
                    .score_dataset(ds)?
                    .into_iter()
                    .map(|s| decide_at(s, t))
                    .collect())
            }
            Policy::Risk {
                model,
                columns,
                threshold,
            } => {
                let idx = columns
                    .iter()
                    .map(|c| {
                        ds.column_index(c)
                            .ok_or_else(|| Error::Policy(format!("cases lack column `{c}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let eta = model.linear_scores(&ds.x().select_columns(idx.iter()))?;
                Ok(eta
                    .into_iter()
                    .map(|e| {
                        if sigmoid(e) < *threshold {
                            Action::Release
                        } else {
                            Action::Withhold
                        }
                    })
                    .collect())
            }
            Policy::Constant(a) => Ok(vec![*a; cases.len()]),
            Policy::Fixed(v) => {
                if v.len() != cases.len() {
                    return Err(Error::Policy(format!(
                        "{} fixed decisions for {} cases",
                        v.len(),
                        cases.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ResponseSurface,
    RosenbaumRubin,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ResponseSurface => "response_surface",
            Method::RosenbaumRubin => "rosenbaum_rubin",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEstimate {
    /// Fraction released under the policy.
    pub action_rate: f64,
    /// Estimated adverse-outcome rate.
    pub value: f64,
    pub method: Method,
    /// Fraction of cases where the policy matches the observed action.
    pub agreement: f64,
    pub n: usize,
}

/// Per-case outputs of a fitted surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub rhat_release: Vec<f64>,
    pub rhat_withhold: Vec<f64>,
    /// Estimated probability that the observed decision-maker releases.
    pub release_prob: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.rhat_release.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhat_release.is_empty()
    }

    pub fn rhat(&self, i: usize, a: Action) -> f64 {
        match a {
            Action::Release => self.rhat_release[i],
            Action::Withhold => self.rhat_withhold[i],
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.rhat_release.len() != n
            || self.rhat_withhold.len() != n
            || self.release_prob.len() != n
        {
            return Err(Error::Policy(format!("predictions do not cover {n} cases")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub lasso: LassoConfig,
    /// Include action x covariate interaction columns.
    pub interactions: bool,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            lasso: LassoConfig::default(),
            interactions: true,
        }
    }
}

/// Outcome model with the action as a predictor, plus a model of the
/// release decision itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub feature_names: Vec<String>,
    pub interactions: bool,
    /// Coefficients over `[x, release, release * x]`.
    pub outcome: GlmFit,
    /// Coefficients over `x`.
    pub release: GlmFit,
    pub outcome_lambda: f64,
    pub release_lambda: f64,
}

fn design(x: &DMatrix<f64>, release: &[f64], interactions: bool) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let width = if interactions { 2 * p + 1 } else { p + 1 };
    DMatrix::from_fn(n, width, |i, j| {
        if j < p {
            x[(i, j)]
        } else if j == p {
            release[i]
        } else {
            release[i] * x[(i, j - p - 1)]
        }
    })
}

/// Outcome and release-decision lasso models fitted on `cases`, each with
/// its penalty chosen by cross-validation over `folds`.
pub fn fit_response_surface(
    cases: &CaseSet,
    folds: &FoldAssignment,
    cfg: &SurfaceConfig,
) -> Result<ResponseSurface> {
    if folds.len() != cases.len() {
        return Err(Error::InvalidArgument(format!(
            "fold assignment covers {} rows, cases have {}",
            folds.len(),
            cases.len()
        )));
    }
    let rel: Vec<u8> = cases
        .actions()
        .iter()
        .map(|&a| u8::from(a == Action::Release))
        .collect();
    let n_rel = rel.iter().filter(|&&r| r == 1).count();
    if n_rel == 0 || n_rel == rel.len() {
        return Err(Error::Policy(
            "every case has the same action; counterfactual outcomes are not identified".into(),
        ));
    }
    if !cases.dataset().has_both_classes() {
        return Err(Error::Policy(
            "every case has the same outcome; the outcome model is degenerate".into(),
        ));
    }
    let x = cases.dataset().x();
    let a: Vec<f64> = rel.iter().map(|&r| f64::from(r)).collect();
    let z = design(x, &a, cfg.interactions);
    let (outcome, release) = rayon::join(
        || cv_select(&z, cases.outcomes(), folds, &cfg.lasso),
        || cv_select(x, &rel, folds, &cfg.lasso),
    );
    let (outcome, release) = (outcome?, release?);
    let oi = outcome.selected_lambda.expect("selection set");
    let ri = release.selected_lambda.expect("selection set");
    Ok(ResponseSurface {
        feature_names: cases.dataset().feature_names().to_vec(),
        interactions: cfg.interactions,
        outcome: outcome.fit_at(oi),
        release: release.fit_at(ri),
        outcome_lambda: outcome.lambda_grid[oi],
        release_lambda: release.lambda_grid[ri],
    })
}

impl ResponseSurface {
    fn outcome_eta(&self, x: &[f64], a: f64) -> f64 {
        let p = x.len();
        let c = &self.outcome.coefficients;
        let mut eta = self.outcome.intercept + c[p] * a;
        for j in 0..p {
            eta += c[j] * x[j];
            if self.interactions {
                eta += c[p + 1 + j] * a * x[j];
            }
        }
        eta
    }

    /// `r̂(t | x)`.
    pub fn predict(&self, x: &[f64], action: Action) -> f64 {
        sigmoid(self.outcome_eta(x, action.indicator()))
    }

    /// Estimated `Pr(release | x)`.
    pub fn release_prob(&self, x: &[f64]) -> f64 {
        let eta = self.release.intercept
            + self
                .release
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>();
        sigmoid(eta)
    }

    pub fn predict_cases(&self, cases: &CaseSet) -> Result<Predictions> {
        if cases.dataset().feature_names() != self.feature_names.as_slice() {
            return Err(Error::Policy(
                "cases do not share the surface's feature layout".into(),
            ));
        }
        let n = cases.len();
        let rows: Vec<(f64, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = cases.dataset().row(i);
                (
                    self.predict(&x, Action::Release),
                    self.predict(&x, Action::Withhold),
                    self.release_prob(&x),
                )
            })
            .collect();
        Ok(Predictions {
            rhat_release: rows.iter().map(|r| r.0).collect(),
            rhat_withhold: rows.iter().map(|r| r.1).collect(),
            release_prob: rows.iter().map(|r| r.2).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("surface serializes")
    }
}

fn summarize(
    cases: &CaseSet,
    decisions: &[Action],
    method: Method,
    counterfactual: impl Fn(usize) -> f64,
) -> Result<PolicyEstimate> {
    let n = cases.len();
    if decisions.len() != n {
        return Err(Error::Policy(format!(
            "{} decisions for {n} cases",
            decisions.len()
        )));
    }
    let observed = cases.actions();
    let outcomes = cases.outcomes();
    let mut total = 0.0;
    let mut released = 0usize;
    let mut agree = 0usize;
    for i in 0..n {
        if decisions[i] == Action::Release {
            released += 1;
        }
        if decisions[i] == observed[i] {
            agree += 1;
            total += f64::from(outcomes[i]);
        } else {
            total += counterfactual(i);
        }
    }
    Ok(PolicyEstimate {
        action_rate: released as f64 / n as f64,
        value: total / n as f64,
        method,
        agreement: agree as f64 / n as f64,
        n,
    })
}

/// Observed outcome where the policy matches the observed action, the
/// surface's estimate for the prescribed action otherwise.
pub fn estimate_from_predictions(
    cases: &CaseSet,
    decisions: &[Action],
    pred: &Predictions,
) -> Result<PolicyEstimate> {
    pred.check(cases.len())?;
    summarize(cases, decisions, Method::ResponseSurface, |i| {
        pred.rhat(i, decisions[i])
    })
}

pub fn estimate_policy(
    cases: &CaseSet,
    policy: &Policy,
    surface: &ResponseSurface,
) -> Result<PolicyEstimate> {
    let decisions = policy.actions(cases)?;
    estimate_from_predictions(cases, &decisions, &surface.predict_cases(cases)?)
}

/// Exact value from stored potential outcomes.
pub fn oracle_value(cases: &CaseSet, policy: &Policy) -> Result<PolicyEstimate> {
    let decisions = policy.actions(cases)?;
    oracle_from_actions(cases, &decisions)
}

pub fn oracle_from_actions(cases: &CaseSet, decisions: &[Action]) -> Result<PolicyEstimate> {
    let po = cases
        .dataset()
        .potential_outcomes()
        .ok_or_else(|| Error::Policy("cases carry no potential outcomes".into()))?;
    let n = cases.len();
    if decisions.len() != n {
        return Err(Error::Policy(format!(
            "{} decisions for {n} cases",
            decisions.len()
        )));
    }
    let observed = cases.actions();
    let mut total = 0u64;
    let mut released = 0usize;
    let mut agree = 0usize;
    for i in 0..n {
        let (rr, rw) = po[i];
        total += u64::from(match decisions[i] {
            Action::Release => {
                released += 1;
                rr
            }
            Action::Withhold => rw,
        });
        agree += usize::from(decisions[i] == observed[i]);
    }
    Ok(PolicyEstimate {
        action_rate: released as f64 / n as f64,
        value: total as f64 / n as f64,
        method: Method::Oracle,
        agreement: agree as f64 / n as f64,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub min_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub surface: SurfaceConfig,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            min_size: 200,
            folds: 10,
            seed: 0,
            surface: SurfaceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub group: String,
    pub n: usize,
    /// Observed release and adverse-outcome rates within the group.
    pub raw_release_rate: f64,
    pub raw_outcome_rate: f64,
    pub estimate: PolicyEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSkip {
    pub group: String,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupReport {
    pub estimates: Vec<GroupEstimate>,
    pub skipped: Vec<GroupSkip>,
}

/// Fits a separate surface within each group (outcome-stratified folds
/// seeded by `cfg.seed`) and evaluates the policy on that group's cases.
pub fn per_group_estimates(
    cases: &CaseSet,
    policy: &Policy,
    cfg: &GroupConfig,
) -> Result<GroupReport> {
    let ids = cases
        .dataset()
        .group_ids()
        .ok_or_else(|| Error::Policy("cases carry no group ids".into()))?;
    let decisions = policy.actions(cases)?;
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in ids.iter().enumerate() {
        members.entry(g.as_str()).or_default().push(i);
    }
    let results: Vec<std::result::Result<GroupEstimate, GroupSkip>> = members
        .par_iter()
        .map(|(&g, idx)| {
            let skip = |reason: String| GroupSkip {
                group: g.to_string(),
                n: idx.len(),
                reason,
            };
            if idx.len() < cfg.min_size {
                return Err(skip(format!("fewer than {} cases", cfg.min_size)));
            }
            let run = || -> Result<GroupEstimate> {
                let sub = cases.subset(idx)?;
                let folds = stratified_kfold(sub.outcomes(), cfg.folds, cfg.seed)?;
                let surface = fit_response_surface(&sub, &folds, &cfg.surface)?;
                let d: Vec<Action> = idx.iter().map(|&i| decisions[i]).collect();
                let estimate = estimate_from_predictions(&sub, &d, &surface.predict_cases(&sub)?)?;
                Ok(GroupEstimate {
                    group: g.to_string(),
                    n: idx.len(),
                    raw_release_rate: sub.release_rate(),
                    raw_outcome_rate: sub.outcome_rate(),
                    estimate,
                })
            };
            run().map_err(|e| skip(e.to_string()))
        })
        .collect();
    let mut report = GroupReport::default();
    for r in results {
        match r {
            Ok(e) => report.estimates.push(e),
            Err(s) => report.skipped.push(s),
        }
    }
    Ok(report)
}

/// Strength of a hypothetical hidden binary covariate `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    /// `Pr(u = 1)`.
    pub p_u: f64,
    /// Log-odds shift of release when `u = 1`.
    pub alpha: f64,
    /// Log-odds shift of the adverse outcome under release when `u = 1`.
    pub delta_release: f64,
    pub delta_withhold: f64,
}

impl SensitivityParams {
    pub fn new(p_u: f64, alpha: f64, delta_release: f64, delta_withhold: f64) -> Result<Self> {
        let s = SensitivityParams {
            p_u,
            alpha,
            delta_release,
            delta_withhold,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_u > 0.0 && self.p_u < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_u = {} must lie strictly inside (0, 1)",
                self.p_u
            )));
        }
        if !(self.alpha.is_finite()
            && self.delta_release.is_finite()
            && self.delta_withhold.is_finite())
        {
            return Err(Error::InvalidArgument(
                "sensitivity shifts must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn delta(&self, a: Action) -> f64 {
        match a {
            Action::Release => self.delta_release,
            Action::Withhold => self.delta_withhold,
        }
    }

    /// `p_u` ranges over 0.1..0.9 and each outcome shift over
    /// `{-log s, 0, log s}`, with `alpha = log s`.
    pub fn grid(strength: f64) -> Vec<SensitivityParams> {
        let l = strength.ln();
        let mut out = Vec::with_capacity(81);
        for k in 1..=9 {
            for dr in [-l, 0.0, l] {
                for dw in [-l, 0.0, l] {
                    out.push(SensitivityParams {
                        p_u: f64::from(k) / 10.0,
                        alpha: l,
                        delta_release: dr,
                        delta_withhold: dw,
                    });
                }
            }
        }
        out
    }

    /// `alpha = log 2`, shifts in `{-log 2, 0, log 2}`.
    pub fn regime_moderate() -> Vec<SensitivityParams> {
        Self::grid(2.0)
    }

    /// `alpha = log 3`, shifts in `{-log 3, 0, log 3}`.
    pub fn regime_extreme() -> Vec<SensitivityParams> {
        Self::grid(3.0)
    }
}

/// `(1 - w) σ(b) + w σ(b + d)`.
fn mixture(w: f64, b: f64, d: f64) -> f64 {
    (1.0 - w) * sigmoid(b) + w * sigmoid(b + d)
}

/// Solves `(1 - w) σ(b) + w σ(b + d) = target` for `b`. With `t = e^b` and
/// `A = e^d` this is the quadratic
/// `A(1-q) t² + [(1-w) + wA - q(1+A)] t - q = 0`, whose positive root is
/// taken in a cancellation-free form. Falls back to bisection when the
/// residual is not below `1e-10`.
fn solve_mixture(w: f64, d: f64, target: f64) -> f64 {
    let q = target;
    let big_a = d.exp();
    if w == 0.0 || d == 0.0 {
        return logit(q);
    }
    if big_a.is_finite() && big_a > 0.0 {
        let a = big_a * (1.0 - q);
        let b = (1.0 - w) + w * big_a - q * (1.0 + big_a);
        let disc = b * b + 4.0 * a * q;
        let root = disc.sqrt();
        let t = if b >= 0.0 {
            2.0 * q / (b + root)
        } else {
            (root - b) / (2.0 * a)
        };
        if t > 0.0 && t.is_finite() {
            let sol = t.ln();
            if (mixture(w, sol, d) - q).abs() < 1e-10 {
                return sol;
            }
        }
    }
    bisect_mixture(w, d, q)
}

/// Bisection on the monotone mixture.
pub fn bisect_mixture(w: f64, d: f64, target: f64) -> f64 {
    let f = |b: f64| mixture(w, b, d) - target;
    let mut lo = logit(target) - d.abs() - 1.0;
    let mut hi = logit(target) + d.abs() + 1.0;
    while f(lo) > 0.0 {
        lo -= 10.0;
    }
    while f(hi) < 0.0 {
        hi += 10.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} = {v} must lie strictly inside (0, 1)"
        )))
    }
}

/// The `γ` with `(1 - p_u) σ(γ) + p_u σ(γ + α) = q`.
pub fn solve_gamma(p_u: f64, alpha: f64, q: f64) -> Result<f64> {
    check_open_unit("q", q)?;
    check_open_unit("p_u", p_u)?;
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument("alpha must be finite".into()));
    }
    Ok(solve_mixture(p_u, alpha, q))
}

/// `Pr(u = 1 | a, x)` under the selection model `Pr(release | u) = σ(γ + uα)`.
pub fn posterior_u(gamma: f64, alpha: f64, p_u: f64, action: Action) -> f64 {
    let (l1, l0) = match action {
        Action::Release => (sigmoid(gamma + alpha), sigmoid(gamma)),
        Action::Withhold => (sigmoid(-(gamma + alpha)), sigmoid(-gamma)),
    };
    let num = l1 * p_u;
    let den = num + l0 * (1.0 - p_u);
    if den > 0.0 {
        num / den
    } else {
        p_u
    }
}

/// The `β` with `(1 - w) σ(β) + w σ(β + δ) = r̂`, where `w = Pr(u=1 | a, x)`.
pub fn solve_beta(rhat: f64, posterior_u1: f64, delta: f64) -> Result<f64> {
    check_open_unit("rhat", rhat)?;
    if !(0.0..=1.0).contains(&posterior_u1) {
        return Err(Error::InvalidArgument(format!(
            "posterior {posterior_u1} is not a probability"
        )));
    }
    if !delta.is_finite() {
        return Err(Error::InvalidArgument("delta must be finite".into()));
    }
    Ok(solve_mixture(posterior_u1, delta, rhat))
}

/// Estimated `Pr(r(t̄) = 1 | a = t, x)` for the action `t̄` not taken.
///
/// `rhat_release`/`rhat_withhold` come from the response surface and `q`
/// is the estimated release probability.
pub fn rr_counterfactual(
    rhat_release: f64,
    rhat_withhold: f64,
    params: &SensitivityParams,
    observed: Action,
    q: f64,
) -> Result<f64> {
    params.validate()?;
    let other = observed.other();
    let rhat_other = clamp_prob(match other {
        Action::Release => rhat_release,
        Action::Withhold => rhat_withhold,
    });
    let delta = params.delta(other);
    if delta == 0.0 {
        return Ok(rhat_other);
    }
    let gamma = solve_gamma(params.p_u, params.alpha, clamp_prob(q))?;
    let post_taken = posterior_u(gamma, params.alpha, params.p_u, observed);
    let post_other = posterior_u(gamma, params.alpha, params.p_u, other);
    let beta = solve_beta(rhat_other, post_other, delta)?;
    Ok(mixture(post_taken, beta, delta))
}

pub fn rr_from_predictions(
    cases: &CaseSet,
    decisions: &[Action],
    pred: &Predictions,
    params: &SensitivityParams,
) -> Result<PolicyEstimate> {
    pred.check(cases.len())?;
    params.validate()?;
    let observed = cases.actions();
    let cf: Vec<f64> = (0..cases.len())
        .into_par_iter()
        .map(|i| {
            if decisions.get(i) == Some(&observed[i]) {
                Ok(0.0)
            } else {
                rr_counterfactual(
                    pred.rhat_release[i],
                    pred.rhat_withhold[i],
                    params,
                    observed[i],
                    pred.release_prob[i],
                )
            }
        })
        .collect::<Result<_>>()?;
    summarize(cases, decisions, Method::RosenbaumRubin, |i| cf[i])
}

pub fn rr_estimate(
    cases: &CaseSet,
    policy: &Policy,
    surface: &ResponseSurface,
    params: &SensitivityParams,
) -> Result<PolicyEstimate> {
    let decisions = policy.actions(cases)?;
    rr_from_predictions(cases, &decisions, &surface.predict_cases(cases)?, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBand {
    pub action_rate: f64,
    pub baseline: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<(SensitivityParams, f64)>,
}

impl SensitivityBand {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Min and max of the sensitivity-adjusted value over `regimes`, reported
/// next to the unadjusted estimate.
pub fn sensitivity_band(
    cases: &CaseSet,
    decisions: &[Action],
    pred: &Predictions,
    regimes: &[SensitivityParams],
) -> Result<SensitivityBand> {
    if regimes.is_empty() {
        return Err(Error::InvalidArgument("no sensitivity regimes".into()));
    }
    let base = estimate_from_predictions(cases, decisions, pred)?;
    let values: Vec<(SensitivityParams, f64)> = regimes
        .iter()
        .map(|r| rr_from_predictions(cases, decisions, pred, r).map(|e| (*r, e.value)))
        .collect::<Result<_>>()?;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
            (lo.min(*v), hi.max(*v))
        });
    Ok(SensitivityBand {
        action_rate: base.action_rate,
        baseline: base.value,
        min,
        max,
        values,
    })
}

pub fn sensitivity_sweep(
    cases: &CaseSet,
    policy: &Policy,
    surface: &ResponseSurface,
    regimes: &[SensitivityParams],
) -> Result<SensitivityBand> {
    let decisions = policy.actions(cases)?;
    sensitivity_band(cases, &decisions, &surface.predict_cases(cases)?, regimes)
}

/// One row of a policy-evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub policy: String,
    pub threshold: f64,
    pub estimate: PolicyEstimate,
    pub regime: String,
}

pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(e.into());
    w.write_record([
        "policy",
        "threshold",
        "action_rate",
        "value",
        "method",
        "agreement",
        "n",
        "regime",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.threshold.to_string(),
            r.estimate.action_rate.to_string(),
            r.estimate.value.to_string(),
            r.estimate.method.as_str().to_string(),
            r.estimate.agreement.to_string(),
            r.estimate.n.to_string(),
            r.regime.clone(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::Data(csv::Error::from(e).into()))?;
    Ok(())
}
