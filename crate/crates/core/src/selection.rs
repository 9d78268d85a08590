//! Greedy forward stepwise selection by training deviance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureGroup};
use crate::error::{Error, GlmError, Result};
use crate::glm::{fit_logistic, logit, IrlsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Select indicator groups (one per original categorical column) as
    /// units; `false` selects individual columns.
    pub grouped: bool,
    pub irls: IrlsConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            grouped: true,
            irls: IrlsConfig::default(),
        }
    }
}

/// Features in the order the greedy search added them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub units: Vec<FeatureGroup>,
    /// Training deviance after each step.
    pub deviance: Vec<f64>,
    pub null_deviance: f64,
}

impl SelectionTrace {
    /// Selected column indices, unit by unit.
    pub fn ordered_features(&self) -> Vec<usize> {
        self.units
            .iter()
            .flat_map(|u| u.columns.iter().copied())
            .collect()
    }

    pub fn unit_names(&self) -> Vec<&str> {
        self.units.iter().map(|u| u.name.as_str()).collect()
    }

    /// The trace truncated to its first `k` steps.
    pub fn prefix(&self, k: usize) -> SelectionTrace {
        let k = k.min(self.units.len());
        SelectionTrace {
            units: self.units[..k].to_vec(),
            deviance: self.deviance[..k].to_vec(),
            null_deviance: self.null_deviance,
        }
    }
}

fn null_deviance(y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    if pos == 0.0 || pos == n {
        return 0.0;
    }
    let b0 = logit(pos / n);
    -2.0 * (pos * b0 - n * crate::glm::log1p_exp(b0))
}

/// Deviance of the model on `cols`. A separated fit contributes its last
/// (near-zero) deviance, which is the infimum the likelihood approaches; an
/// exactly collinear extension adds nothing over `current`.
fn candidate_deviance(
    x: &DMatrix<f64>,
    y: &[u8],
    cols: &[usize],
    current: f64,
    cfg: &IrlsConfig,
) -> std::result::Result<f64, GlmError> {
    let sub = x.select_columns(cols.iter());
    match fit_logistic(&sub, y, cfg) {
        Ok(fit) => Ok(fit.deviance()),
        Err(GlmError::Separation { deviance, .. }) => Ok(deviance.min(current)),
        Err(GlmError::Singular) => Ok(current),
        Err(e) => Err(e),
    }
}

/// Adds, `k` times, the unit whose inclusion minimizes training deviance.
/// Ties go to the unit with the lower leading column index.
pub fn forward_stepwise(ds: &Dataset, k: usize, cfg: &SelectionConfig) -> Result<SelectionTrace> {
    let units: Vec<FeatureGroup> = if cfg.grouped {
        let mut g = ds.feature_groups().to_vec();
        g.sort_by_key(|u| u.columns.iter().copied().min().unwrap_or(usize::MAX));
        g
    } else {
        ds.feature_names()
            .iter()
            .enumerate()
            .map(|(j, n)| FeatureGroup {
                name: n.clone(),
                columns: vec![j],
            })
            .collect()
    };
    if k == 0 || k > units.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={}",
            units.len()
        )));
    }
    if !ds.has_both_classes() {
        return Err(Error::Selection {
            step: 1,
            source: GlmError::SingleClass,
        });
    }
    let x = ds.x();
    let y = ds.labels();
    let null = null_deviance(y);
    let mut current = null;
    let mut chosen: Vec<usize> = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    let mut deviance = Vec::with_capacity(k);
    for step in 1..=k {
        let remaining: Vec<usize> = (0..units.len()).filter(|u| !chosen.contains(u)).collect();
        let scores: Vec<(usize, f64)> = remaining
            .par_iter()
            .map(|&u| {
                let mut c = cols.clone();
                c.extend(&units[u].columns);
                candidate_deviance(x, y, &c, current, &cfg.irls).map(|d| (u, d))
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|source| Error::Selection { step, source })?;
        let mut best = scores[0];
        for &s in &scores[1..] {
            if s.1 < best.1 {
                best = s;
            }
        }
        chosen.push(best.0);
        cols.extend(&units[best.0].columns);
        current = best.1.min(current);
        deviance.push(current);
    }
    Ok(SelectionTrace {
        units: chosen.iter().map(|&u| units[u].clone()).collect(),
        deviance,
        null_deviance: null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<f64>], y: Vec<u8>) -> Dataset {
        let p = rows[0].len();
        Dataset::new((0..p).map(|j| format!("f{j}")).collect(), rows, y).unwrap()
    }

    #[test]
    fn k_out_of_range() {
        let d = ds(&[vec![0.0], vec![1.0], vec![0.5]], vec![0, 1, 1]);
        assert!(forward_stepwise(&d, 0, &SelectionConfig::default()).is_err());
        assert!(forward_stepwise(&d, 2, &SelectionConfig::default()).is_err());
    }

    #[test]
    fn identical_columns_tie_to_lower_index() {
        let y: Vec<u8> = vec![0, 1, 0, 1, 1, 0, 1, 0, 0, 1];
        let signal = [0.2, 0.7, 0.3, 0.9, 0.6, 0.4, 0.8, 0.1, 0.65, 0.55];
        let noise = [0.5, 0.3, 0.2, 0.8, 0.6, 0.9, 0.1, 0.4, 0.7, 0.0];
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![noise[i], signal[i], signal[i]])
            .collect();
        let d = ds(&rows, y);
        let t = forward_stepwise(&d, 3, &SelectionConfig::default()).unwrap();
        assert_eq!(t.units[0].columns, vec![1], "{t:?}");
        assert_eq!(t.ordered_features().len(), 3);
        assert!(t.deviance.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn label_copy_is_selected_first() {
        let y: Vec<u8> = vec![0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0];
        let noise = [0.3, 0.1, 0.9, 0.4, 0.2, 0.8, 0.5, 0.6, 0.7, 0.0, 0.35, 0.45];
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![noise[i], f64::from(y[i])]).collect();
        let t = forward_stepwise(&ds(&rows, y), 1, &SelectionConfig::default()).unwrap();
        assert_eq!(t.units[0].columns, vec![1]);
        assert!(t.deviance[0] < 1e-3);
    }
}
