//! Replicated comparisons of strategies on a benchmark.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functions::BenchmarkFn;
use crate::acquisition::{adaptive_region, beta, AcquisitionConfig, RegionBounds, Strategy};
use crate::campaign::{run_campaign, CampaignConfig, CampaignState};
use crate::design::DEFAULT_CANDIDATES_PER_COMBINATION;
use crate::error::{Error, Result};
use crate::kernel::MixedPoint;
use crate::rng::derive_seed;

/// Largest share of failed runs a study tolerates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// A named acquisition setting within a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub label: String,
    pub acquisition: AcquisitionConfig,
}

impl StrategySpec {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            label: strategy.name().to_string(),
            acquisition: AcquisitionConfig::with_strategy(strategy),
        }
    }

    pub fn with_rho(strategy: Strategy, rho: f64) -> Self {
        Self {
            label: format!("{}(rho={rho})", strategy.name()),
            acquisition: AcquisitionConfig {
                rho,
                ..AcquisitionConfig::with_strategy(strategy)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub function: String,
    pub strategies: Vec<StrategySpec>,
    pub n_reps: usize,
    pub n_init: usize,
    pub n_sequential: usize,
    pub seed: u64,
    pub candidates_per_combination: usize,
}

impl StudyConfig {
    /// The benchmark's default protocol for the given strategies.
    pub fn new(function: &str, strategies: &[Strategy], n_reps: usize, seed: u64) -> Result<Self> {
        let f = BenchmarkFn::by_name(function)?;
        let (n_init, n_sequential) = f.default_budget;
        Ok(Self {
            function: function.to_string(),
            strategies: strategies.iter().map(|&s| StrategySpec::new(s)).collect(),
            n_reps,
            n_init,
            n_sequential,
            seed,
            candidates_per_combination: DEFAULT_CANDIDATES_PER_COMBINATION,
        })
    }

    /// Adaptive strategy at each of `rhos`.
    pub fn rho_sweep(function: &str, rhos: &[f64], n_reps: usize, seed: u64) -> Result<Self> {
        let mut c = Self::new(function, &[], n_reps, seed)?;
        c.strategies = rhos
            .iter()
            .map(|&r| StrategySpec::with_rho(Strategy::AdaptiveCee, r))
            .collect();
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::invalid("a study needs at least one strategy"));
        }
        if self.n_reps == 0 {
            return Err(Error::invalid("a study needs at least one replication"));
        }
        let mut labels: Vec<&str> = self.strategies.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("strategy labels must be distinct"));
        }
        Ok(())
    }

    /// Seed shared by every strategy in replication `rep`.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, rep as u64)
    }

    pub fn campaign_config(&self, f: &BenchmarkFn, spec: &StrategySpec, rep: usize) -> Result<CampaignConfig> {
        let mut c = CampaignConfig::new(
            f.domain.clone(),
            spec.acquisition,
            self.n_init,
            self.n_sequential,
            self.replication_seed(rep),
        )?;
        c.candidates_per_combination = self.candidates_per_combination;
        Ok(c)
    }

    /// Stable 64-bit FNV-1a digest of the serialized config.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("study config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub function: String,
    pub strategy: String,
    pub replication: usize,
    pub seed: u64,
    /// Best response found; `None` when the run failed before any evaluation.
    pub best_value: Option<f64>,
    pub failed: bool,
    pub wall_ms: f64,
}

/// Order statistics of the found minima of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub runs: usize,
    pub failures: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<Summary>,
}

impl StudyResult {
    pub fn summary(&self, label: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.strategy == label)
    }

    /// Successful best values of one strategy, in replication order.
    pub fn best_values(&self, label: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.strategy == label && !r.failed)
            .filter_map(|r| r.best_value)
            .collect()
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Summaries per strategy label, in first-appearance order.
pub fn summarize(runs: &[RunRecord]) -> Vec<Summary> {
    let mut labels: Vec<&str> = Vec::new();
    for r in runs {
        if !labels.contains(&r.strategy.as_str()) {
            labels.push(&r.strategy);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.strategy == label).collect();
            let mut v: Vec<f64> = mine.iter().filter(|r| !r.failed).filter_map(|r| r.best_value).collect();
            v.sort_by(f64::total_cmp);
            let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            Summary {
                strategy: label.to_string(),
                runs: mine.len(),
                failures: mine.iter().filter(|r| r.failed).count(),
                min: quantile(&v, 0.0),
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: quantile(&v, 1.0),
                mean,
            }
        })
        .collect()
}

/// Runs one strategy for one replication.
pub fn run_replication(f: &BenchmarkFn, config: &StudyConfig, spec: &StrategySpec, rep: usize) -> Result<CampaignState> {
    let cc = config.campaign_config(f, spec, rep)?;
    run_campaign(|w| f.evaluate(w).unwrap_or(f64::NAN), cc).map_err(|abort| abort.error)
}

/// Every strategy on every replication. Within a replication all
/// strategies share the initial design and candidate-pool seeds.
pub fn replicate_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let f = BenchmarkFn::by_name(&config.function)?;
    let jobs: Vec<(usize, &StrategySpec)> = (0..config.n_reps)
        .flat_map(|rep| config.strategies.iter().map(move |s| (rep, s)))
        .collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(rep, spec)| {
            let start = Instant::now();
            let outcome = config
                .campaign_config(&f, spec, rep)
                .map_err(|error| crate::campaign::CampaignAbort { state: None, error })
                .and_then(|cc| run_campaign(|w| f.evaluate(w).unwrap_or(f64::NAN), cc));
            let (best_value, failed) = match outcome {
                Ok(state) => (state.best_value(), false),
                Err(abort) => (abort.state.and_then(|s| s.best_value()), true),
            };
            RunRecord {
                function: config.function.clone(),
                strategy: spec.label.clone(),
                replication: rep,
                seed: config.replication_seed(rep),
                best_value,
                failed,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect();
    let failures = runs.iter().filter(|r| r.failed).count();
    if failures as f64 > MAX_FAILURE_RATE * runs.len() as f64 {
        return Err(Error::Study(format!("{failures} of {} runs failed", runs.len())));
    }
    let summaries = summarize(&runs);
    Ok(StudyResult {
        config: config.clone(),
        runs,
        summaries,
    })
}

/// Unit-scale grid: `per_axis` evenly spaced values per continuous input
/// (both ends included) crossed with every level combination, levels outermost.
pub fn diagnostic_grid(f: &BenchmarkFn, per_axis: usize) -> Vec<MixedPoint> {
    let p = f.domain.p();
    let axis: Vec<f64> = (0..per_axis).map(|i| i as f64 / (per_axis - 1).max(1) as f64).collect();
    let cells = per_axis.pow(p as u32);
    let mut out = Vec::new();
    for z in crate::design::full_factorial(f.domain.qualitative()) {
        for cell in 0..cells {
            let mut c = cell;
            let mut x = vec![0.0; p];
            for v in x.iter_mut().rev() {
                *v = axis[c % per_axis];
                c /= per_axis;
            }
            out.push(MixedPoint::new(x, z.clone()));
        }
    }
    out
}

/// Adaptive region of the state's current model over a unit-scale grid.
pub fn region_on_grid(state: &CampaignState, grid: &[MixedPoint]) -> Result<RegionBounds> {
    let model = state.fit_current_model()?;
    let n = state.points().len();
    let b = beta(n, state.config().domain.qualitative().combinations(), state.config().acquisition.alpha)?;
    adaptive_region(grid, &model, b)
}

/// Per-iteration region snapshot on a diagnostic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSnapshot {
    /// Observations the model was fitted to.
    pub n: usize,
    pub beta: f64,
    pub in_region: Vec<bool>,
}

impl RegionSnapshot {
    pub fn fraction(&self) -> f64 {
        self.in_region.iter().filter(|&&b| b).count() as f64 / self.in_region.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub state: CampaignState,
    pub grid: Vec<MixedPoint>,
    /// One snapshot after the initial design and one after each sequential point.
    pub regions: Vec<RegionSnapshot>,
}

/// Runs one campaign and records the adaptive region on a grid after the
/// initial design and after every sequential observation.
pub fn trace_campaign(f: &BenchmarkFn, config: CampaignConfig, per_axis: usize) -> Result<Trace> {
    let grid = diagnostic_grid(f, per_axis);
    let n_init = config.init.n_runs;
    let mut state = CampaignState::new(config)?;
    let mut regions = Vec::new();
    loop {
        if state.points().len() >= n_init {
            let r = region_on_grid(&state, &grid)?;
            regions.push(RegionSnapshot {
                n: state.points().len(),
                beta: r.beta,
                in_region: r.in_region,
            });
        }
        if state.is_exhausted() {
            break;
        }
        let w = state.ask()?;
        state.tell(f.evaluate(&w)?)?;
    }
    Ok(Trace { state, grid, regions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!(quantile(&[], 0.5).is_nan());
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn grid_layout() {
        let f = BenchmarkFn::by_name("example1").unwrap();
        let g = diagnostic_grid(&f, 512);
        assert_eq!(g.len(), 1536);
        assert_eq!(g[0], MixedPoint::new(vec![0.0], vec![1]));
        assert_eq!(g[1535], MixedPoint::new(vec![1.0], vec![3]));
    }

    #[test]
    fn study_validation() {
        let mut c = StudyConfig::new("example1", &[], 1, 0).unwrap();
        assert!(c.validate().is_err());
        c.strategies = vec![StrategySpec::new(Strategy::Mu), StrategySpec::new(Strategy::Mu)];
        assert!(c.validate().is_err());
        assert_ne!(c.fingerprint(), StudyConfig::new("example1", &[Strategy::Mu], 1, 0).unwrap().fingerprint());
    }

    #[test]
    fn single_replication_study() {
        let mut c = StudyConfig::new("example1", &[Strategy::AdaptiveCee, Strategy::Ra], 1, 3).unwrap();
        c.candidates_per_combination = 50;
        let r = replicate_study(&c).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert!(r.runs.iter().all(|run| !run.failed && run.seed == c.replication_seed(0)));
        let again = run_replication(&BenchmarkFn::by_name("example1").unwrap(), &c, &c.strategies[0], 0).unwrap();
        assert_eq!(again.best_value(), r.runs[0].best_value);
    }
}
