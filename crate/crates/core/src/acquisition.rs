//! Acquisition criteria and the adaptive design region.
//!
//! Everything here works in the minimization orientation. Maximization
//! problems are negated at the campaign boundary before they reach this
//! module, so `Sense` only matters for [`cee_score`] on raw predictions.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::kernel::MixedPoint;
use crate::model::{AgpModel, PredictiveDist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Composite criterion restricted to the adaptive region.
    AdaptiveCee,
    /// Composite criterion over the whole candidate pool.
    Cee,
    /// Expected improvement.
    Ei,
    /// Minimum predictive mean.
    Mu,
    /// Maximum predictive standard deviation.
    Si,
    /// One-shot random design; never consults a model.
    Ra,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::AdaptiveCee,
        Strategy::Cee,
        Strategy::Ei,
        Strategy::Mu,
        Strategy::Si,
        Strategy::Ra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::AdaptiveCee => "ADAPTIVE_CEE",
            Strategy::Cee => "CEE",
            Strategy::Ei => "EI",
            Strategy::Mu => "MU",
            Strategy::Si => "SI",
            Strategy::Ra => "RA",
        }
    }

    pub fn uses_model(self) -> bool {
        self != Strategy::Ra
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub strategy: Strategy,
    pub rho: f64,
    pub alpha: f64,
    pub sense: Sense,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::AdaptiveCee,
            rho: 2.0,
            alpha: 0.05,
            sense: Sense::Min,
        }
    }
}

impl AcquisitionConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be nonnegative, got {}", self.rho)));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Confidence-width multiplier `2 log(pi^2 n^2 M / (6 alpha))`, clamped at 0.
pub fn beta(n: usize, combinations: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 || combinations == 0 {
        return Err(Error::invalid("beta needs n >= 1 and M >= 1"));
    }
    let n = n as f64;
    let arg = std::f64::consts::PI.powi(2) * n * n * combinations as f64 / (6.0 * alpha);
    Ok((2.0 * arg.ln()).max(0.0))
}

/// Composite exploitation/exploration value: `mean - rho sd` to minimize,
/// or `mean + rho sd` to maximize.
pub fn cee_score(pred: &PredictiveDist, rho: f64, sense: Sense) -> f64 {
    match sense {
        Sense::Min => pred.mean - rho * pred.sd,
        Sense::Max => pred.mean + rho * pred.sd,
    }
}

pub fn confidence_bounds(pred: &PredictiveDist, beta: f64) -> (f64, f64) {
    let half = beta.max(0.0).sqrt() * pred.sd;
    (pred.mean - half, pred.mean + half)
}

fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Closed-form expected improvement below `best_observed`.
pub fn ei_score(pred: &PredictiveDist, best_observed: f64) -> f64 {
    let gap = best_observed - pred.mean;
    if pred.sd <= 0.0 {
        return gap.max(0.0);
    }
    let u = gap / pred.sd;
    (pred.sd * std_normal_pdf(u) + gap * std_normal_cdf(u)).max(0.0)
}

/// Inputs some strategies need beyond the prediction itself.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreContext {
    pub best_observed: Option<f64>,
    pub beta: Option<f64>,
}

/// Criterion value in a single lower-is-better orientation.
pub fn score(pred: &PredictiveDist, config: &AcquisitionConfig, ctx: &ScoreContext) -> Result<f64> {
    match config.strategy {
        Strategy::AdaptiveCee => {
            ctx.beta
                .ok_or_else(|| Error::invalid("ADAPTIVE_CEE scoring needs beta in the context"))?;
            Ok(cee_score(pred, config.rho, Sense::Min))
        }
        Strategy::Cee => Ok(cee_score(pred, config.rho, Sense::Min)),
        Strategy::Ei => {
            let best = ctx
                .best_observed
                .ok_or_else(|| Error::invalid("EI scoring needs best_observed in the context"))?;
            Ok(-ei_score(pred, best))
        }
        Strategy::Mu => Ok(pred.mean),
        Strategy::Si => Ok(-pred.sd),
        Strategy::Ra => Err(Error::invalid("RA is a one-shot design and has no criterion")),
    }
}

/// Confidence bounds over a candidate pool and the adaptive region they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBounds {
    pub beta: f64,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    /// Smallest upper bound over the pool.
    pub threshold: f64,
    pub in_region: Vec<bool>,
}

impl RegionBounds {
    pub fn size(&self) -> usize {
        self.in_region.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.size() as f64 / self.in_region.len() as f64
    }
}

/// Adaptive region from precomputed predictions: members have a lower
/// bound no larger than the pool's smallest upper bound.
pub fn region_from_predictions(preds: &[PredictiveDist], beta: f64) -> Result<RegionBounds> {
    if preds.is_empty() {
        return Err(Error::invalid("adaptive region over an empty candidate set"));
    }
    let (mu_lower, mu_upper): (Vec<f64>, Vec<f64>) =
        preds.iter().map(|p| confidence_bounds(p, beta)).unzip();
    let threshold = mu_upper.iter().copied().fold(f64::INFINITY, f64::min);
    let in_region = mu_lower.iter().map(|&lo| lo <= threshold).collect();
    Ok(RegionBounds {
        beta,
        mu_lower,
        mu_upper,
        threshold,
        in_region,
    })
}

pub fn adaptive_region(candidates: &[MixedPoint], model: &AgpModel, beta: f64) -> Result<RegionBounds> {
    let preds = model.predict_many(candidates)?;
    region_from_predictions(&preds, beta)
}

/// Index of the smallest finite score; lowest index wins ties.
pub fn argmin_index(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Outcome of scoring a candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    /// Lower-is-better criterion value of the winner.
    pub score: f64,
    /// Composite value `mean - rho sd` of the winner.
    pub cee_value: f64,
    pub region: Option<RegionBounds>,
}

/// Picks the best candidate for a model-based strategy.
pub fn select(preds: &[PredictiveDist], config: &AcquisitionConfig, ctx: &ScoreContext) -> Result<Selection> {
    config.validate()?;
    if preds.is_empty() {
        return Err(Error::invalid("cannot select from an empty candidate set"));
    }
    let scores = preds
        .iter()
        .map(|p| score(p, config, ctx))
        .collect::<Result<Vec<_>>>()?;
    let region = match config.strategy {
        Strategy::AdaptiveCee => Some(region_from_predictions(preds, ctx.beta.unwrap_or_default())?),
        _ => None,
    };
    let masked = scores.iter().enumerate().map(|(i, &s)| match &region {
        Some(r) if !r.in_region[i] => f64::NAN,
        _ => s,
    });
    let index = argmin_index(masked)
        .ok_or_else(|| Error::Numerical("every candidate scored NaN".into()))?;
    Ok(Selection {
        index,
        score: scores[index],
        cee_value: cee_score(&preds[index], config.rho, Sense::Min),
        region,
    })
}
