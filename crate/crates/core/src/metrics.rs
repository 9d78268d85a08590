//! AUC, accuracy and the cross-validated `k x M` sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{folds_for, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::glm::{cv_select, fit_logistic, GlmFit};
use crate::selection::forward_stepwise;
use crate::srr::{regress_selected, SrrConfig};

/// Probability that a random positive outscores a random negative, ties
/// counting one half (the Mann-Whitney statistic).
///
/// Computed from ranks after one sort. The numerator is accumulated in
/// integer half-units, so the result is bit-identical to counting pairs.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "auc needs both classes among the labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the number of (pos, neg) pairs ordered correctly, ties once
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_here = order[i..j].iter().filter(|&&r| labels[r] == 1).count() as u128;
        let neg_here = (j - i) as u128 - pos_here;
        twice_u += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Fraction of positions where the two vectors agree.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty label vector".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepModel {
    Scorecard,
    /// Unrounded lasso on the same selected features.
    SelectedLasso,
    FullLasso,
    FullLogistic,
}

impl SweepModel {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepModel::Scorecard => "scorecard",
            SweepModel::SelectedLasso => "selected_lasso",
            SweepModel::FullLasso => "full_lasso",
            SweepModel::FullLogistic => "full_logistic",
        }
    }
}

/// One model evaluated on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: SweepModel,
    pub k: Option<usize>,
    pub m: Option<u32>,
    pub fold: usize,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub k_values: Vec<usize>,
    pub m_values: Vec<u32>,
    pub rows: Vec<SweepRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

impl SweepResult {
    fn rows_for(
        &self,
        model: SweepModel,
        k: Option<usize>,
        m: Option<u32>,
    ) -> impl Iterator<Item = &SweepRow> {
        self.rows
            .iter()
            .filter(move |r| r.model == model && r.k == k && r.m == m)
    }

    /// Mean held-out AUC over the folds that succeeded.
    pub fn mean_auc(&self, model: SweepModel, k: Option<usize>, m: Option<u32>) -> Option<f64> {
        mean(self.rows_for(model, k, m).filter_map(|r| r.auc))
    }

    pub fn mean_accuracy(
        &self,
        model: SweepModel,
        k: Option<usize>,
        m: Option<u32>,
    ) -> Option<f64> {
        mean(self.rows_for(model, k, m).filter_map(|r| r.accuracy))
    }

    pub fn scorecard_auc(&self, k: usize, m: u32) -> Option<f64> {
        self.mean_auc(SweepModel::Scorecard, Some(k), Some(m))
    }

    pub fn errors(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    /// CSV with columns `model,k,M,fold,auc,accuracy,error`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Data(e.into());
        w.write_record(["model", "k", "M", "fold", "auc", "accuracy", "error"])
            .map_err(io)?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.model.as_str().to_string(),
                opt(r.k.map(|v| v.to_string())),
                opt(r.m.map(|v| v.to_string())),
                r.fold.to_string(),
                opt(r.auc.map(|v| v.to_string())),
                opt(r.accuracy.map(|v| v.to_string())),
                opt(r.error.clone()),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Data(csv::Error::from(e).into()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub srr: SrrConfig,
    /// Folds used inside each training portion to choose the lasso penalty.
    pub inner_folds: usize,
    pub seed: u64,
    /// Skip the unpenalized full-feature benchmark.
    pub skip_full_logistic: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            srr: SrrConfig::default(),
            inner_folds: 10,
            seed: 0,
            skip_full_logistic: false,
        }
    }
}

fn prob_predictions(fit: &GlmFit, test: &Dataset) -> Result<(Vec<f64>, Vec<u8>)> {
    let eta = fit.linear_scores(test.x())?;
    let pred = eta.iter().map(|&e| u8::from(e >= 0.0)).collect();
    Ok((eta, pred))
}

fn evaluated(
    model: SweepModel,
    k: Option<usize>,
    m: Option<u32>,
    fold: usize,
    outcome: Result<(Vec<f64>, Vec<u8>)>,
    labels: &[u8],
) -> SweepRow {
    let scored = outcome.and_then(|(s, p)| Ok((auc(&s, labels)?, accuracy(&p, labels)?)));
    let (auc, accuracy, error) = match scored {
        Ok((a, c)) => (Some(a), Some(c), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    SweepRow {
        model,
        k,
        m,
        fold,
        auc,
        accuracy,
        error,
    }
}

fn sweep_fold(
    ds: &Dataset,
    k_values: &[usize],
    m_values: &[u32],
    folds: &FoldAssignment,
    fold: usize,
    cfg: &SweepConfig,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let (train, test) = match (
        ds.subset(&folds.train_indices(fold)),
        ds.subset(&folds.test_indices(fold)),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            rows.push(evaluated(
                SweepModel::FullLasso,
                None,
                None,
                fold,
                Err(e.into()),
                &[],
            ));
            return rows;
        }
    };
    let y = test.labels();
    let inner = folds_for(
        train.labels(),
        cfg.inner_folds,
        cfg.seed ^ fold as u64,
        true,
    );
    let inner = match inner {
        Ok(f) => f,
        Err(e) => {
            let msg: Error = e.into();
            rows.push(evaluated(
                SweepModel::FullLasso,
                None,
                None,
                fold,
                Err(msg),
                y,
            ));
            return rows;
        }
    };

    let full = cv_select(train.x(), train.labels(), &inner, &cfg.srr.lasso)
        .map_err(Error::from)
        .and_then(|p| prob_predictions(&p.selected_fit().expect("selection set"), &test));
    rows.push(evaluated(SweepModel::FullLasso, None, None, fold, full, y));
    if !cfg.skip_full_logistic {
        let logit = fit_logistic(train.x(), train.labels(), &cfg.srr.selection.irls)
            .map_err(Error::from)
            .and_then(|f| prob_predictions(&f, &test));
        rows.push(evaluated(
            SweepModel::FullLogistic,
            None,
            None,
            fold,
            logit,
            y,
        ));
    }

    let k_max = k_values.iter().copied().max().unwrap_or(0);
    let trace = forward_stepwise(&train, k_max, &cfg.srr.selection);
    for &k in k_values {
        let refit = trace
            .as_ref()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|t| regress_selected(&train, &t.prefix(k), &inner, &cfg.srr.lasso));
        let refit = match refit {
            Ok(r) => r,
            Err(e) => {
                let msg = e.to_string();
                rows.push(evaluated(
                    SweepModel::SelectedLasso,
                    Some(k),
                    None,
                    fold,
                    Err(Error::Numerical(msg.clone())),
                    y,
                ));
                for &m in m_values {
                    rows.push(evaluated(
                        SweepModel::Scorecard,
                        Some(k),
                        Some(m),
                        fold,
                        Err(Error::Numerical(msg.clone())),
                        y,
                    ));
                }
                continue;
            }
        };
        let unrounded = test
            .select_columns(&refit.trace.ordered_features())
            .map_err(Error::from)
            .and_then(|sub| prob_predictions(&refit.fit, &sub));
        rows.push(evaluated(
            SweepModel::SelectedLasso,
            Some(k),
            None,
            fold,
            unrounded,
            y,
        ));
        for &m in m_values {
            let card = refit.round(m);
            let scored = card.score_dataset(&test).map(|s| {
                let t = card
                    .provenance
                    .as_ref()
                    .map(|p| p.implied_threshold())
                    .unwrap_or(0.0);
                let pred = s.iter().map(|&v| u8::from(v >= t)).collect();
                (s, pred)
            });
            rows.push(evaluated(
                SweepModel::Scorecard,
                Some(k),
                Some(m),
                fold,
                scored,
                y,
            ));
        }
    }
    rows
}

/// For each outer fold: builds scorecards for every `(k, M)` on the training
/// portion and scores the held-out portion, alongside three benchmarks
/// fitted on the same split. Failures are recorded per row.
pub fn cv_sweep(
    ds: &Dataset,
    k_values: &[usize],
    m_values: &[u32],
    folds: &FoldAssignment,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if folds.len() != ds.n() {
        return Err(Error::InvalidArgument(format!(
            "fold assignment covers {} rows, dataset has {}",
            folds.len(),
            ds.n()
        )));
    }
    if k_values.is_empty() || m_values.is_empty() {
        return Err(Error::InvalidArgument("empty k or M grid".into()));
    }
    if m_values.contains(&0) || k_values.contains(&0) {
        return Err(Error::InvalidArgument("k and M must be at least 1".into()));
    }
    let mut k_values = k_values.to_vec();
    k_values.sort_unstable();
    k_values.dedup();
    let mut m_values = m_values.to_vec();
    m_values.sort_unstable();
    m_values.dedup();
    let rows: Vec<SweepRow> = (0..folds.fold_count())
        .into_par_iter()
        .flat_map_iter(|f| sweep_fold(ds, &k_values, &m_values, folds, f, cfg))
        .collect();
    Ok(SweepResult {
        k_values,
        m_values,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[1.0, 2.0, 3.0, 4.0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[2.0; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert!(auc(&[1.0, 2.0], &[1, 1]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 0], &[1, 1, 1, 1]).unwrap(), 0.5);
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }
}
