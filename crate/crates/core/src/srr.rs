//! Select-regress-and-round: stepwise selection, lasso refit, then
//! rescaling to `[-M, M]` and rounding to integers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Action, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::glm::{cv_select, GlmFit, LassoConfig};
use crate::selection::{forward_stepwise, SelectionConfig, SelectionTrace};

/// Rounds half away from zero (`f64::round` semantics, named for clarity).
fn round_half_away(v: f64) -> i64 {
    v.round() as i64
}

/// `M / max|β|`, or `None` when every coefficient is zero.
pub fn scale_factor(coefs: &[f64], m: u32) -> Option<f64> {
    let max = coefs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    (max > 0.0).then(|| f64::from(m) / max)
}

/// `w_j = round(M β_j / max|β|)`; all-zero input maps to all zeros.
pub fn rescale_round(coefs: &[f64], m: u32) -> Vec<i64> {
    match scale_factor(coefs, m) {
        None => vec![0; coefs.len()],
        Some(s) => coefs
            .iter()
            .map(|&b| {
                // guard the bound against 1 ulp overshoot at the maximum
                round_half_away(b * s).clamp(-i64::from(m), i64::from(m))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub feature: String,
    pub weight: i64,
}

/// How the integer weights were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub selection: SelectionTrace,
    /// Lasso coefficients of the selected columns, aligned with `columns`.
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// `M / max|β|` (zero when the lasso zeroed everything).
    pub scale_factor: f64,
}

/// An integer-weight checklist. Entries with weight zero are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub entries: Vec<ScoreEntry>,
    pub weight_bound: u32,
    pub feature_budget: usize,
    pub threshold: Option<f64>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SrrConfig {
    pub selection: SelectionConfig,
    pub lasso: LassoConfig,
}

impl Scorecard {
    /// A hand-written card, e.g. for a published rule.
    pub fn from_weights(
        entries: Vec<(String, i64)>,
        weight_bound: u32,
        threshold: Option<f64>,
    ) -> Result<Self> {
        let k = entries.len();
        let card = Scorecard {
            entries: entries
                .into_iter()
                .map(|(feature, weight)| ScoreEntry { feature, weight })
                .collect(),
            weight_bound,
            feature_budget: k,
            threshold,
            provenance: None,
        };
        card.validate()?;
        Ok(card)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight_bound == 0 {
            return Err(Error::Scorecard("weight bound M must be at least 1".into()));
        }
        let m = i64::from(self.weight_bound);
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.weight.abs() > m {
                return Err(Error::Scorecard(format!(
                    "weight {} of `{}` exceeds bound {m}",
                    e.weight, e.feature
                )));
            }
            if !seen.insert(e.feature.as_str()) {
                return Err(Error::Scorecard(format!("duplicate entry `{}`", e.feature)));
            }
        }
        if let Some(t) = self.threshold {
            if t.is_nan() {
                return Err(Error::Scorecard("threshold is NaN".into()));
            }
        }
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Column positions of each entry within `names`.
    pub fn bind(&self, names: &[String]) -> Result<Vec<usize>> {
        self.entries
            .iter()
            .map(|e| {
                names
                    .iter()
                    .position(|n| *n == e.feature)
                    .ok_or_else(|| Error::Scorecard(format!("row lacks feature `{}`", e.feature)))
            })
            .collect()
    }

    fn score_bound(&self, cols: &[usize], row: &[f64]) -> f64 {
        self.entries
            .iter()
            .zip(cols)
            .map(|(e, &c)| e.weight as f64 * row[c])
            .sum()
    }

    /// `Σ w_j x_j` for a row laid out as `names`.
    pub fn score(&self, names: &[String], row: &[f64]) -> Result<f64> {
        if names.len() != row.len() {
            return Err(Error::Scorecard(format!(
                "{} names for {} values",
                names.len(),
                row.len()
            )));
        }
        let cols = self.bind(names)?;
        Ok(self.score_bound(&cols, row))
    }

    /// Release iff the score is strictly below the threshold.
    pub fn decide(&self, names: &[String], row: &[f64]) -> Result<Action> {
        let t = self
            .threshold
            .ok_or_else(|| Error::Scorecard("threshold not set".into()))?;
        Ok(decide_at(self.score(names, row)?, t))
    }

    /// Scores for every row of `ds`.
    pub fn score_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let cols = self.bind(ds.feature_names())?;
        let x = ds.x();
        Ok((0..ds.n())
            .map(|i| {
                self.entries
                    .iter()
                    .zip(&cols)
                    .map(|(e, &c)| e.weight as f64 * x[(i, c)])
                    .sum()
            })
            .collect())
    }

    /// Smallest and largest attainable scores over 0/1 indicator rows.
    pub fn score_range(&self) -> (f64, f64) {
        let lo = self.entries.iter().map(|e| e.weight.min(0)).sum::<i64>();
        let hi = self.entries.iter().map(|e| e.weight.max(0)).sum::<i64>();
        (lo as f64, hi as f64)
    }

    /// Two-column "Feature / Score" listing.
    pub fn render_table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.feature.len())
            .max()
            .unwrap_or(0)
            .max("Feature".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  Score", "Feature");
        let _ = writeln!(out, "{}", "-".repeat(width + 7));
        for e in &self.entries {
            let _ = writeln!(out, "{:<width$}  {:>5}", e.feature, e.weight);
        }
        if let Some(t) = self.threshold {
            let _ = writeln!(out, "{}", "-".repeat(width + 7));
            let _ = writeln!(out, "Release if total score < {t}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scorecard serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let card: Scorecard = serde_json::from_str(text)?;
        card.validate()?;
        Ok(card)
    }
}

pub fn decide_at(score: f64, threshold: f64) -> Action {
    if score < threshold {
        Action::Release
    } else {
        Action::Withhold
    }
}

/// Runs the three steps on `ds`. `folds` indexes the rows of `ds` and drives
/// the lasso penalty choice.
pub fn build_scorecard(
    ds: &Dataset,
    k: usize,
    m: u32,
    folds: &FoldAssignment,
    cfg: &SrrConfig,
) -> Result<Scorecard> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let trace = forward_stepwise(ds, k, &cfg.selection)?;
    let refit = regress_selected(ds, &trace, folds, &cfg.lasso)?;
    Ok(refit.round(m))
}

/// Output of steps 1 and 2, ready to be rounded at any `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedFit {
    pub trace: SelectionTrace,
    pub columns: Vec<String>,
    pub fit: GlmFit,
    pub lambda: f64,
}

impl SelectedFit {
    /// Step 3 at weight bound `m`.
    pub fn round(&self, m: u32) -> Scorecard {
        let m = m.max(1);
        let weights = rescale_round(&self.fit.coefficients, m);
        let entries = self
            .columns
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w != 0)
            .map(|(f, &w)| ScoreEntry {
                feature: f.clone(),
                weight: w,
            })
            .collect();
        Scorecard {
            entries,
            weight_bound: m,
            feature_budget: self.trace.units.len(),
            threshold: None,
            provenance: Some(Provenance {
                selection: self.trace.clone(),
                columns: self.columns.clone(),
                coefficients: self.fit.coefficients.clone(),
                intercept: self.fit.intercept,
                lambda: self.lambda,
                scale_factor: scale_factor(&self.fit.coefficients, m).unwrap_or(0.0),
            }),
        }
    }
}

/// Step 2: cross-validated lasso on the columns chosen by `trace`.
pub fn regress_selected(
    ds: &Dataset,
    trace: &SelectionTrace,
    folds: &FoldAssignment,
    lasso: &LassoConfig,
) -> Result<SelectedFit> {
    let cols = trace.ordered_features();
    let sub = ds.select_columns(&cols)?;
    let path = cv_select(sub.x(), sub.labels(), folds, lasso)?;
    let idx = path.selected_lambda.expect("cv_select sets a selection");
    Ok(SelectedFit {
        trace: trace.clone(),
        columns: sub.feature_names().to_vec(),
        fit: path.fit_at(idx),
        lambda: path.lambda_grid[idx],
    })
}

impl Provenance {
    /// Threshold on the integer score equivalent to probability 1/2 under
    /// the unrounded model: `-intercept * scale_factor`.
    pub fn implied_threshold(&self) -> f64 {
        -self.intercept * self.scale_factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> (Scorecard, Vec<String>) {
        let names: Vec<String> = [
            "age_18_20",
            "age_21_25",
            "age_26_30",
            "age_31_35",
            "age_36_40",
            "age_41_45",
            "age_46_50",
            "priors_1",
            "priors_2",
            "priors_3",
            "priors_4_plus",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let w = [8, 6, 4, 2, 2, 2, 2, 6, 8, 9, 10];
        let card = Scorecard::from_weights(names.iter().cloned().zip(w).collect(), 10, Some(10.5))
            .unwrap();
        (card, names)
    }

    fn row(names: &[String], on: &[&str]) -> Vec<f64> {
        names
            .iter()
            .map(|n| if on.contains(&n.as_str()) { 1.0 } else { 0.0 })
            .collect()
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_round(&[2.0, 1.0, -0.5], 3), vec![3, 2, -1]);
        assert_eq!(rescale_round(&[0.0, 0.0, 0.0], 5), vec![0, 0, 0]);
        assert_eq!(rescale_round(&[0.0, -0.3, 0.0], 7), vec![0, -7, 0]);
        assert_eq!(rescale_round(&[4.0, 1.0], 1), vec![1, 0]);
        // 0.5 rounds away from zero in both directions
        assert_eq!(rescale_round(&[2.0, 0.5, -0.5], 2), vec![2, 1, -1]);
    }

    #[test]
    fn table1_scores() {
        let (card, names) = table1();
        assert_eq!(
            card.score(&names, &row(&names, &["age_18_20", "priors_1"]))
                .unwrap(),
            14.0
        );
        assert_eq!(card.score(&names, &row(&names, &[])).unwrap(), 0.0);
        let r = row(&names, &["age_36_40", "priors_2"]);
        assert_eq!(card.score(&names, &r).unwrap(), 10.0);
        assert_eq!(card.decide(&names, &r).unwrap(), Action::Release);
        let r = row(&names, &["age_18_20", "priors_1"]);
        assert_eq!(card.decide(&names, &r).unwrap(), Action::Withhold);
    }

    #[test]
    fn strict_threshold() {
        let (card, names) = table1();
        let r = row(&names, &["priors_4_plus"]);
        assert_eq!(
            card.clone()
                .with_threshold(10.0)
                .decide(&names, &r)
                .unwrap(),
            Action::Withhold
        );
        assert_eq!(
            card.with_threshold(10.01).decide(&names, &r).unwrap(),
            Action::Release
        );
    }

    #[test]
    fn degenerate_threshold_withholds_everyone() {
        let (card, names) = table1();
        let lowest = card.score_range().0;
        let card = card.with_threshold(lowest - 1.0);
        for on in [&[][..], &["age_18_20"][..], &["priors_2", "age_46_50"][..]] {
            assert_eq!(
                card.decide(&names, &row(&names, on)).unwrap(),
                Action::Withhold
            );
        }
    }

    #[test]
    fn empty_card_scores_zero() {
        let card = Scorecard::from_weights(vec![], 3, None).unwrap();
        assert_eq!(card.score(&["a".into()], &[1.0]).unwrap(), 0.0);
        assert!(card.decide(&["a".into()], &[1.0]).is_err());
    }

    #[test]
    fn missing_feature_is_an_error() {
        let (card, _) = table1();
        assert!(card.score(&["age_18_20".into()], &[1.0]).is_err());
    }

    #[test]
    fn rejects_out_of_bound_weight() {
        assert!(Scorecard::from_weights(vec![("a".into(), 4)], 3, None).is_err());
    }

    #[test]
    fn json_round_trip_and_table() {
        let (card, _) = table1();
        assert_eq!(Scorecard::from_json(&card.to_json()).unwrap(), card);
        let t = card.render_table();
        assert!(t.contains("priors_4_plus") && t.contains("10.5"));
    }

    #[test]
    fn single_signal_gets_full_weight() {
        let y: Vec<u8> = (0..60).map(|i| u8::from(i % 3 == 0)).collect();
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                vec![
                    ((i * 7) % 11) as f64,
                    0.6 * f64::from(y[i]) + ((i * 13) % 7) as f64 / 7.0,
                ]
            })
            .collect();
        let ds = Dataset::new(vec!["noise".into(), "sig".into()], &rows, y.clone()).unwrap();
        let folds = crate::data::stratified_kfold(&y, 5, 1).unwrap();
        let card = build_scorecard(&ds, 1, 4, &folds, &SrrConfig::default()).unwrap();
        assert_eq!(card.entries.len(), 1);
        assert_eq!(card.entries[0].feature, "sig");
        assert_eq!(card.entries[0].weight, 4);
    }
}
