//! Three-way split workflow: build rules on one third of the cases, fit the
//! response surface on another, and evaluate policies on the last.

use serde::{Deserialize, Serialize};

use crate::data::{kfold, stratified_kfold, Action, FoldAssignment};
use crate::error::{Error, Result};
use crate::glm::{cv_select, sigmoid, GlmFit};
use crate::policy::{
    estimate_from_predictions, fit_response_surface, oracle_from_actions, sensitivity_band,
    CaseSet, EstimateRow, Policy, Predictions, ResponseSurface, SensitivityBand, SensitivityParams,
    SurfaceConfig,
};
use crate::srr::{build_scorecard, Scorecard, SrrConfig};

/// Which of the three folds plays which part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRoles {
    pub construct: usize,
    pub surface: usize,
    pub evaluate: usize,
}

impl FoldRoles {
    /// Rotation 0 is (0, 1, 2); each further rotation shifts every role by
    /// one fold.
    pub fn rotated(r: usize) -> Self {
        FoldRoles {
            construct: r % 3,
            surface: (r + 1) % 3,
            evaluate: (r + 2) % 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub m: u32,
    pub seed: u64,
    /// Folds for penalty selection inside the construct and surface parts.
    pub inner_folds: usize,
    pub rotation: usize,
    /// Fit rules on released cases only (outcomes of withheld cases are
    /// not comparable).
    pub released_only: bool,
    /// Also fit the full-feature lasso risk model on the construct fold.
    pub risk_model: bool,
    pub srr: SrrConfig,
    pub surface: SurfaceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 2,
            m: 10,
            seed: 0,
            inner_folds: 10,
            rotation: 0,
            released_only: true,
            risk_model: true,
            srr: SrrConfig::default(),
            surface: SurfaceConfig::default(),
        }
    }
}

/// A named policy evaluated at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePolicy {
    pub name: &'static str,
    pub threshold: f64,
    pub decisions: Vec<Action>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub roles: FoldRoles,
    pub split: FoldAssignment,
    pub scorecard: Scorecard,
    /// Full-feature lasso risk model and its column names, when requested.
    pub risk_model: Option<GlmFit>,
    pub risk_columns: Vec<String>,
    pub surface: ResponseSurface,
    pub evaluation: CaseSet,
    pub predictions: Predictions,
}

/// Splits `cases` into three folds and fits every model on its own fold.
pub fn run_pipeline(cases: &CaseSet, cfg: &PipelineConfig) -> Result<Pipeline> {
    let split = kfold(cases.len(), 3, cfg.seed)?;
    let roles = FoldRoles::rotated(cfg.rotation);
    let construct = cases.subset(&split.test_indices(roles.construct))?;
    let surface_cases = cases.subset(&split.test_indices(roles.surface))?;
    let evaluation = cases.subset(&split.test_indices(roles.evaluate))?;

    let rule_data = if cfg.released_only {
        construct.dataset().restrict_to_action(Action::Release)?
    } else {
        construct.dataset().clone()
    };
    let rule_folds = stratified_kfold(rule_data.labels(), cfg.inner_folds, cfg.seed)?;
    let scorecard = build_scorecard(&rule_data, cfg.k, cfg.m, &rule_folds, &cfg.srr)?;
    let risk_model = if cfg.risk_model {
        let path = cv_select(
            rule_data.x(),
            rule_data.labels(),
            &rule_folds,
            &cfg.srr.lasso,
        )?;
        Some(path.selected_fit().expect("selection set"))
    } else {
        None
    };

    let surface_folds = stratified_kfold(surface_cases.outcomes(), cfg.inner_folds, cfg.seed)?;
    let surface = fit_response_surface(&surface_cases, &surface_folds, &cfg.surface)?;
    let predictions = surface.predict_cases(&evaluation)?;
    Ok(Pipeline {
        roles,
        split,
        scorecard,
        risk_model,
        risk_columns: rule_data.feature_names().to_vec(),
        surface,
        evaluation,
        predictions,
    })
}

impl Pipeline {
    /// Half-integer thresholds spanning every attainable integer score, so
    /// each distinct release set appears once.
    pub fn scorecard_thresholds(&self) -> Vec<f64> {
        let (lo, hi) = self.scorecard.score_range();
        let mut t = lo - 0.5;
        let mut out = Vec::new();
        while t <= hi + 0.5 {
            out.push(t);
            t += 1.0;
        }
        out
    }

    pub fn evaluation_scores(&self) -> Result<Vec<f64>> {
        self.scorecard.score_dataset(self.evaluation.dataset())
    }

    pub fn evaluation_risk(&self) -> Result<Vec<f64>> {
        let model = self
            .risk_model
            .as_ref()
            .ok_or_else(|| Error::Policy("pipeline was run without a risk model".into()))?;
        let ds = self.evaluation.dataset();
        let idx: Vec<usize> = self
            .risk_columns
            .iter()
            .map(|c| {
                ds.column_index(c)
                    .ok_or_else(|| Error::Policy(format!("missing `{c}`")))
            })
            .collect::<Result<_>>()?;
        Ok(model
            .linear_scores(&ds.x().select_columns(idx.iter()))?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Risk thresholds at evenly spaced quantiles of the evaluation risks.
    pub fn risk_thresholds(&self, count: usize) -> Result<Vec<f64>> {
        let mut r = self.evaluation_risk()?;
        r.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = (1..=count)
            .map(|i| {
                let pos = (i as f64 / (count + 1) as f64 * r.len() as f64) as usize;
                r[pos.min(r.len() - 1)]
            })
            .collect();
        out.dedup();
        Ok(out)
    }

    pub fn scorecard_policy(&self, threshold: f64) -> Policy {
        Policy::Scorecard(self.scorecard.clone().with_threshold(threshold))
    }

    /// The observed decisions, every scorecard threshold, and `risk_points`
    /// thresholds of the full-feature risk model.
    pub fn candidates(&self, risk_points: usize) -> Result<Vec<CandidatePolicy>> {
        let mut out = vec![CandidatePolicy {
            name: "observed",
            threshold: f64::NAN,
            decisions: self.evaluation.actions().to_vec(),
        }];
        for t in self.scorecard_thresholds() {
            out.push(CandidatePolicy {
                name: "scorecard",
                threshold: t,
                decisions: self.scorecard_policy(t).actions(&self.evaluation)?,
            });
        }
        if risk_points > 0 && self.risk_model.is_some() {
            let risk = self.evaluation_risk()?;
            for t in self.risk_thresholds(risk_points)? {
                out.push(CandidatePolicy {
                    name: "lasso_risk",
                    threshold: t,
                    decisions: risk
                        .iter()
                        .map(|&p| {
                            if p < t {
                                Action::Release
                            } else {
                                Action::Withhold
                            }
                        })
                        .collect(),
                });
            }
        }
        Ok(out)
    }

    pub fn estimate(&self, c: &CandidatePolicy) -> Result<EstimateRow> {
        Ok(EstimateRow {
            policy: c.name.to_string(),
            threshold: c.threshold,
            estimate: estimate_from_predictions(&self.evaluation, &c.decisions, &self.predictions)?,
            regime: String::new(),
        })
    }

    /// Exact value on the evaluation fold, when potential outcomes exist.
    pub fn oracle(&self, c: &CandidatePolicy) -> Result<EstimateRow> {
        Ok(EstimateRow {
            policy: c.name.to_string(),
            threshold: c.threshold,
            estimate: oracle_from_actions(&self.evaluation, &c.decisions)?,
            regime: String::new(),
        })
    }

    pub fn band(
        &self,
        c: &CandidatePolicy,
        regimes: &[SensitivityParams],
    ) -> Result<SensitivityBand> {
        sensitivity_band(&self.evaluation, &c.decisions, &self.predictions, regimes)
    }

    /// Every row index the evaluation fold shares with the fitting folds
    /// (always empty; exposed for auditing).
    pub fn leaked_rows(&self) -> Vec<usize> {
        let a = self.split.assignment();
        (0..a.len())
            .filter(|&i| {
                a[i] == self.roles.evaluate
                    && (a[i] == self.roles.construct || a[i] == self.roles.surface)
            })
            .collect()
    }
}
