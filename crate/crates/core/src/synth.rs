//! Synthetic pretrial-release cohorts with both potential outcomes stored,
//! so policy estimates can be checked against the exact answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::data::{Action, ColumnEncoding, Dataset, EncodingSpec};
use crate::error::{Error, Result};
use crate::glm::sigmoid;
use crate::policy::CaseSet;

pub use crate::policy::{oracle_from_actions, oracle_value};

pub const AGE_CUTS: [f64; 8] = [18.0, 21.0, 26.0, 31.0, 36.0, 41.0, 46.0, 51.0];

/// Age bins 18-20 .. 46-50 (51+ is the reference) and prior-FTA counts
/// 1, 2, 3, 4+ (zero is the reference).
pub fn bail_encoding() -> EncodingSpec {
    EncodingSpec::new()
        .with(
            "age",
            ColumnEncoding::Bin {
                cuts: AGE_CUTS.to_vec(),
                below: false,
                above: true,
                reference: "age_51_plus".into(),
                labels: None,
            },
        )
        .with(
            "priors",
            ColumnEncoding::Bin {
                cuts: vec![1.0, 2.0, 3.0, 4.0],
                below: true,
                above: true,
                reference: "priors_0".into(),
                labels: Some(
                    [
                        "priors_0",
                        "priors_1",
                        "priors_2",
                        "priors_3",
                        "priors_4_plus",
                    ]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                ),
            },
        )
}

/// A binary covariate that the decision-maker sees and the data do not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenU {
    pub p_u: f64,
    /// Log-odds shift of release when `u = 1`.
    pub alpha: f64,
    pub delta_release: f64,
    pub delta_withhold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    /// Ages are `18 + Exp(mean)`, truncated at `age_max`.
    pub age_mean_excess: f64,
    pub age_max: f64,
    /// Probabilities of 0, 1, 2, 3 and 4+ prior failures to appear; 4+ is
    /// spread uniformly over 4..=8.
    pub prior_probs: [f64; 5],
    pub noise_features: usize,
    /// Log-odds contributions under release of age bins 18-20 .. 46-50.
    pub age_effects: [f64; 7],
    /// Log-odds contributions under release of 1, 2, 3, 4+ priors.
    pub prior_effects: [f64; 4],
    /// Withhold-outcome effects are the release ones times this factor.
    pub withhold_scale: f64,
    /// Per-judge intercept shifts in the release-decision model.
    pub judge_offsets: Vec<f64>,
    /// Slope of the release log-odds on the release-outcome risk.
    pub selection_risk_slope: f64,
    pub target_release_rate: f64,
    pub target_adverse_released: f64,
    pub target_adverse_withheld: f64,
    pub hidden_u: Option<HiddenU>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 50_000,
            seed: 0,
            age_mean_excess: 15.0,
            age_max: 80.0,
            prior_probs: [0.55, 0.17, 0.10, 0.07, 0.11],
            noise_features: 3,
            age_effects: [1.4, 1.15, 0.9, 0.7, 0.5, 0.3, 0.15],
            prior_effects: [1.0, 1.4, 1.6, 1.8],
            withhold_scale: 0.7,
            judge_offsets: (0..10).map(|j| -1.2 + 2.4 * f64::from(j) / 9.0).collect(),
            selection_risk_slope: -0.6,
            target_release_rate: 0.69,
            target_adverse_released: 0.15,
            target_adverse_withheld: 0.09,
            hidden_u: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        for (name, v) in [
            ("target_release_rate", self.target_release_rate),
            ("target_adverse_released", self.target_adverse_released),
            ("target_adverse_withheld", self.target_adverse_withheld),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} = {v} must lie strictly inside (0, 1)"));
            }
        }
        if self.prior_probs.iter().any(|&p| !(p >= 0.0))
            || self.prior_probs.iter().sum::<f64>() <= 0.0
        {
            return bad("prior_probs must be non-negative with positive sum".into());
        }
        if !(self.age_mean_excess > 0.0) || !(self.age_max > AGE_CUTS[0]) {
            return bad("age distribution parameters out of range".into());
        }
        if self.judge_offsets.is_empty() {
            return bad("at least one judge is required".into());
        }
        let finite = self
            .age_effects
            .iter()
            .chain(&self.prior_effects)
            .chain(&self.judge_offsets)
            .chain([&self.withhold_scale, &self.selection_risk_slope])
            .all(|v| v.is_finite());
        if !finite {
            return bad("model coefficients must be finite".into());
        }
        if let Some(h) = &self.hidden_u {
            if !(h.p_u > 0.0 && h.p_u < 1.0) {
                return bad(format!(
                    "hidden p_u = {} must lie strictly inside (0, 1)",
                    h.p_u
                ));
            }
            if !(h.alpha.is_finite() && h.delta_release.is_finite() && h.delta_withhold.is_finite())
            {
                return bad("hidden-u shifts must be finite".into());
            }
        }
        Ok(())
    }
}

/// Intercepts found by calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub selection: f64,
    pub adverse_released: f64,
    pub adverse_withheld: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    /// Raw covariates `age`, `priors`, `noise_*`; group `judge`; action
    /// `action`; outcome `fta`; both potential outcomes.
    pub cases: CaseSet,
    pub config: GeneratorConfig,
    pub calibration: Calibration,
    /// The hidden covariate, when enabled.
    pub hidden: Option<Vec<u8>>,
}

impl SyntheticCohort {
    /// The cases with age and prior-FTA indicators in place of the raw
    /// columns.
    pub fn encoded(&self) -> Result<CaseSet> {
        let ds = crate::data::encode(self.cases.dataset(), &bail_encoding())?;
        CaseSet::from_dataset(ds)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        Ok(self.cases.dataset().write_csv(out)?)
    }

    /// Exact average effect of release versus withholding on the outcome.
    pub fn average_treatment_effect(&self) -> f64 {
        let po = self
            .cases
            .dataset()
            .potential_outcomes()
            .expect("synthetic");
        po.iter()
            .map(|&(r, w)| f64::from(r) - f64::from(w))
            .sum::<f64>()
            / po.len() as f64
    }
}

/// Root of a non-decreasing function by bisection on a bracket widened
/// until it contains a sign change.
fn increasing_root(f: impl Fn(f64) -> f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (-10.0, 10.0);
    let mut widen = 0;
    while f(lo) > 0.0 || f(hi) < 0.0 {
        lo *= 2.0;
        hi *= 2.0;
        widen += 1;
        if widen > 8 {
            return Err(Error::InvalidArgument(format!(
                "target {what} is unreachable under the configured model"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

struct Draw {
    age: f64,
    priors: f64,
    noise: Vec<f64>,
    judge: usize,
    u: u8,
    /// Release-outcome risk without intercept.
    risk: f64,
}

fn age_bin(age: f64) -> Option<usize> {
    (0..7).find(|&b| age >= AGE_CUTS[b] && age < AGE_CUTS[b + 1])
}

/// Draws a cohort. Intercepts are calibrated so that, in expectation over
/// the drawn covariates, the release rate and the adverse rates among
/// released and withheld cases match their targets.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let age_tail = Exp::new(1.0 / cfg.age_mean_excess).expect("positive rate");
    let priors = WeightedIndex::new(cfg.prior_probs).expect("validated weights");
    let n_judges = cfg.judge_offsets.len();

    let draws: Vec<Draw> = (0..cfg.n)
        .map(|_| {
            let age = loop {
                let a = (AGE_CUTS[0] + age_tail.sample(&mut rng)).floor();
                if a <= cfg.age_max {
                    break a;
                }
            };
            let pc = priors.sample(&mut rng);
            let prior_count = if pc == 4 { rng.gen_range(4..=8) } else { pc } as f64;
            let noise: Vec<f64> = (0..cfg.noise_features)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let judge = rng.gen_range(0..n_judges);
            let u = match cfg.hidden_u {
                Some(h) => u8::from(rng.gen::<f64>() < h.p_u),
                None => 0,
            };
            let mut risk = age_bin(age).map_or(0.0, |b| cfg.age_effects[b]);
            if pc >= 1 {
                risk += cfg.prior_effects[pc - 1];
            }
            Draw {
                age,
                priors: prior_count,
                noise,
                judge,
                u,
                risk,
            }
        })
        .collect();

    let (p_u, alpha, d_rel, d_wh) = match cfg.hidden_u {
        Some(h) => (h.p_u, h.alpha, h.delta_release, h.delta_withhold),
        None => (0.0, 0.0, 0.0, 0.0),
    };
    let sel_lin = |d: &Draw| cfg.judge_offsets[d.judge] + cfg.selection_risk_slope * d.risk;
    // expected release probability, marginal over u
    let p_release = |s0: f64, d: &Draw, u: f64| sigmoid(s0 + sel_lin(d) + u * alpha);
    let nf = cfg.n as f64;

    let s0 = increasing_root(
        |s0| {
            draws
                .iter()
                .map(|d| (1.0 - p_u) * p_release(s0, d, 0.0) + p_u * p_release(s0, d, 1.0))
                .sum::<f64>()
                / nf
                - cfg.target_release_rate
        },
        "release rate",
    )?;
    let adverse_rate = |b: f64, scale: f64, delta: f64, released: bool| {
        let (mut num, mut den) = (0.0, 0.0);
        for d in &draws {
            for (u, w) in [(0.0, 1.0 - p_u), (1.0, p_u)] {
                if w == 0.0 {
                    continue;
                }
                let pr = p_release(s0, d, u);
                let pa = if released { pr } else { 1.0 - pr };
                num += w * pa * sigmoid(b + scale * d.risk + u * delta);
                den += w * pa;
            }
        }
        num / den
    };
    let b_rel = increasing_root(
        |b| adverse_rate(b, 1.0, d_rel, true) - cfg.target_adverse_released,
        "adverse rate among released",
    )?;
    let b_wh = increasing_root(
        |b| adverse_rate(b, cfg.withhold_scale, d_wh, false) - cfg.target_adverse_withheld,
        "adverse rate among withheld",
    )?;

    let mut names = vec!["age".to_string(), "priors".to_string()];
    names.extend((1..=cfg.noise_features).map(|j| format!("noise_{j}")));
    let mut rows = Vec::with_capacity(cfg.n);
    let mut actions = Vec::with_capacity(cfg.n);
    let mut outcomes = Vec::with_capacity(cfg.n);
    let mut potential = Vec::with_capacity(cfg.n);
    let mut judges = Vec::with_capacity(cfg.n);
    for d in &draws {
        let u = f64::from(d.u);
        let release = rng.gen::<f64>() < p_release(s0, d, u);
        let r_rel = u8::from(rng.gen::<f64>() < sigmoid(b_rel + d.risk + u * d_rel));
        let r_wh =
            u8::from(rng.gen::<f64>() < sigmoid(b_wh + cfg.withhold_scale * d.risk + u * d_wh));
        let a = if release {
            Action::Release
        } else {
            Action::Withhold
        };
        let mut row = vec![d.age, d.priors];
        row.extend(&d.noise);
        rows.push(row);
        actions.push(a);
        outcomes.push(if release { r_rel } else { r_wh });
        potential.push((r_rel, r_wh));
        judges.push(format!("judge_{:02}", d.judge + 1));
    }
    let ds = Dataset::new(names, &rows, outcomes)?
        .with_label_name("fta", crate::data::LabelMapping::numeric())
        .with_actions("action", actions)?
        .with_group_ids("judge", judges)?
        .with_potential_outcomes(potential)?;
    Ok(SyntheticCohort {
        cases: CaseSet::from_dataset(ds)?,
        config: cfg.clone(),
        calibration: Calibration {
            selection: s0,
            adverse_released: b_rel,
            adverse_withheld: b_wh,
        },
        hidden: cfg.hidden_u.map(|_| draws.iter().map(|d| d.u).collect()),
    })
}
