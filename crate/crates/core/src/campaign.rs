//! Sequential-design sessions: closed-loop runs against a callable
//! objective and open-loop ask/tell with a JSON state file.
//!
//! The state keeps observations in user units and user orientation. Every
//! proposal is recomputed from that data plus seeds derived from the
//! campaign seed and the current observation count, so a reloaded session
//! proposes exactly what the live one would have.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::{beta, region_from_predictions, select, AcquisitionConfig, ScoreContext, Selection, Sense, Strategy};
use crate::design::{
    candidate_pool, golden_polish, initial_design, random_levels, random_lhd, CandidateSet, InitialDesignSpec,
    DEFAULT_CANDIDATES_PER_COMBINATION, DUPLICATE_TOL,
};
use crate::error::{Error, Result};
use crate::kernel::{DomainSpec, MixedPoint};
use crate::model::{fit, AgpModel, Dataset, FitConfig};
use crate::rng::{derive_seed, stream};

pub const FORMAT_VERSION: u32 = 1;
/// Region fraction below which the pool is regenerated at double density.
const SPARSE_REGION_FRACTION: f64 = 0.05;
const POLISH_EVALS: usize = 50;
const RA_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub domain: DomainSpec,
    pub acquisition: AcquisitionConfig,
    pub init: InitialDesignSpec,
    pub n_sequential: usize,
    pub fit: FitConfig,
    /// Seeds candidate pools and model fits.
    pub seed: u64,
    pub candidates_per_combination: usize,
    /// Golden-section refinement of the winning candidate.
    #[serde(default)]
    pub polish: bool,
}

impl CampaignConfig {
    /// Defaults throughout, with the initial plan matched to `n_init`.
    pub fn new(
        domain: DomainSpec,
        acquisition: AcquisitionConfig,
        n_init: usize,
        n_sequential: usize,
        seed: u64,
    ) -> Result<Self> {
        let init = InitialDesignSpec::auto(n_init, domain.qualitative(), seed);
        let config = Self {
            domain,
            acquisition,
            init,
            n_sequential,
            fit: FitConfig {
                seed,
                ..FitConfig::default()
            },
            seed,
            candidates_per_combination: DEFAULT_CANDIDATES_PER_COMBINATION,
            polish: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn budget(&self) -> usize {
        self.init.n_runs + self.n_sequential
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition.validate()?;
        self.fit.validate()?;
        if self.candidates_per_combination == 0 {
            return Err(Error::invalid("candidates_per_combination must be positive"));
        }
        if self.acquisition.strategy == Strategy::Ra {
            return if self.budget() == 0 {
                Err(Error::invalid("budget must be at least 1"))
            } else {
                Ok(())
            };
        }
        if self.domain.q() == 0 {
            return Err(Error::invalid("model-based strategies need at least one qualitative factor"));
        }
        self.init.validate(self.domain.qualitative())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Ready,
    AwaitingResponse,
}

/// How a model-based proposal was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionDiagnostics {
    /// `mean - rho sd` at the chosen point (`mean + rho sd` when maximizing), user orientation.
    pub cee_value: f64,
    /// Strategy criterion at the chosen point, lower is better.
    pub score: f64,
    pub beta: f64,
    /// Adaptive region size within the pool (adaptive strategy only).
    pub region_size: Option<usize>,
    pub candidates: usize,
    pub log_likelihood: f64,
    /// The proposal used the previous iteration's model after a failed fit.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based index past the initial design.
    pub iteration: usize,
    /// User units.
    pub point: MixedPoint,
    pub response: f64,
    pub best_value: f64,
    pub diagnostics: Option<SelectionDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    point: MixedPoint,
    diagnostics: Option<SelectionDiagnostics>,
}

/// A proposal from a frozen model and candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: MixedPoint,
    pub selection: Selection,
}

/// Scores every candidate and returns the winner; unit-scale, minimizing.
pub fn suggest_from_pool(
    model: &AgpModel,
    pool: &CandidateSet,
    acquisition: &AcquisitionConfig,
    ctx: &ScoreContext,
) -> Result<Proposal> {
    let preds = model.predict_many(&pool.points)?;
    let selection = select(&preds, acquisition, ctx)?;
    Ok(Proposal {
        point: pool.points[selection.index].clone(),
        selection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignState {
    config: CampaignConfig,
    points: Vec<MixedPoint>,
    responses: Vec<f64>,
    phase: Phase,
    pending: Option<Pending>,
    history: Vec<IterationRecord>,
}

impl CampaignState {
    pub fn new(config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            points: Vec::new(),
            responses: Vec::new(),
            phase: Phase::Ready,
            pending: None,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    /// Observed points in user units.
    pub fn points(&self) -> &[MixedPoint] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn pending_point(&self) -> Option<&MixedPoint> {
        self.pending.as_ref().map(|p| &p.point)
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    /// Completed observations past the initial design.
    pub fn iteration(&self) -> usize {
        self.history.len()
    }

    pub fn is_exhausted(&self) -> bool {
        self.points.len() >= self.config.budget()
    }

    fn sign(&self) -> f64 {
        match self.config.acquisition.sense {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }

    /// Index of the best response in the campaign's sense (first on ties).
    pub fn best_index(&self) -> Option<usize> {
        let s = self.sign();
        let mut best: Option<usize> = None;
        for (i, &y) in self.responses.iter().enumerate() {
            if best.is_none_or(|b| s * y < s * self.responses[b]) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best_index().map(|i| self.responses[i])
    }

    pub fn best_point(&self) -> Option<&MixedPoint> {
        self.best_index().map(|i| &self.points[i])
    }

    /// Replaces the acquisition settings between proposals.
    pub fn set_acquisition(&mut self, acquisition: AcquisitionConfig) -> Result<()> {
        if self.phase != Phase::Ready {
            return Err(Error::Protocol("cannot change the strategy while a response is pending".into()));
        }
        let mut config = self.config.clone();
        config.acquisition = acquisition;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Unit-scale observations oriented for minimization.
    pub fn model_dataset(&self) -> Result<Dataset> {
        let domain = &self.config.domain;
        let points = self
            .points
            .iter()
            .map(|w| {
                let mut u = domain.point_to_unit(w);
                u.x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                u
            })
            .collect();
        let s = self.sign();
        let y = self.responses.iter().map(|y| s * y).collect();
        Dataset::new(domain.p(), domain.qualitative().clone(), points, y)
    }

    fn fit_config(&self, n: usize) -> FitConfig {
        FitConfig {
            seed: derive_seed(self.config.fit.seed, n as u64),
            ..self.config.fit.clone()
        }
    }

    /// The surrogate the next proposal would use (before any fallback).
    pub fn fit_current_model(&self) -> Result<AgpModel> {
        let data = self.model_dataset()?;
        fit(&data, &self.fit_config(data.len()))
    }

    /// Size-`budget` one-shot design, unit scale.
    pub fn one_shot_design(&self) -> Vec<MixedPoint> {
        let b = self.config.budget();
        let mut rng = stream(self.config.init.seed, RA_STREAM);
        let levels = random_levels(b, self.config.domain.qualitative(), &mut rng);
        let xs = random_lhd(b, self.config.domain.p(), &mut rng);
        xs.into_iter().zip(levels).map(|(x, z)| MixedPoint::new(x, z)).collect()
    }

    /// Proposes the next point (user units).
    pub fn ask(&mut self) -> Result<MixedPoint> {
        if self.phase == Phase::AwaitingResponse {
            return Err(Error::Protocol("a response is pending; call tell before asking again".into()));
        }
        let n = self.points.len();
        if n >= self.config.budget() {
            return Err(Error::BudgetExhausted(self.config.budget()));
        }
        let (unit, diagnostics) = if self.config.acquisition.strategy == Strategy::Ra {
            (self.one_shot_design().swap_remove(n), None)
        } else if n < self.config.init.n_runs {
            (initial_design(&self.config.init, &self.config.domain)?.swap_remove(n), None)
        } else {
            let (w, d) = self.select_next()?;
            (w, Some(d))
        };
        let point = self.config.domain.point_from_unit(&unit);
        self.pending = Some(Pending {
            point: point.clone(),
            diagnostics,
        });
        self.phase = Phase::AwaitingResponse;
        Ok(point)
    }

    /// Records the response to the pending point.
    pub fn tell(&mut self, y: f64) -> Result<()> {
        if self.phase != Phase::AwaitingResponse {
            return Err(Error::Protocol("no point is awaiting a response; call ask first".into()));
        }
        if !y.is_finite() {
            return Err(Error::invalid(format!("response must be finite, got {y}")));
        }
        let pending = self.pending.take().expect("awaiting phase carries a pending point");
        self.points.push(pending.point.clone());
        self.responses.push(y);
        self.phase = Phase::Ready;
        if self.points.len() > self.config.init.n_runs {
            self.history.push(IterationRecord {
                iteration: self.history.len() + 1,
                point: pending.point,
                response: y,
                best_value: self.best_value().expect("just pushed a response"),
                diagnostics: pending.diagnostics,
            });
        }
        Ok(())
    }

    fn fit_with_fallback(&self, data: &Dataset) -> Result<(AgpModel, bool)> {
        let n = data.len();
        let err = match fit(data, &self.fit_config(n)) {
            Ok(m) => return Ok((m, false)),
            Err(e @ (Error::FitFailure { .. } | Error::Numerical(_))) => e,
            Err(e) => return Err(e),
        };
        let fell_back_last_time = self
            .history
            .last()
            .and_then(|r| r.diagnostics.as_ref())
            .is_some_and(|d| d.fallback);
        if fell_back_last_time || n < 2 {
            return Err(err);
        }
        let previous = Dataset::new(
            data.p(),
            data.space().clone(),
            data.points()[..n - 1].to_vec(),
            data.responses()[..n - 1].to_vec(),
        )?;
        fit(&previous, &self.fit_config(n - 1)).map(|m| (m, true)).map_err(|_| err)
    }

    fn select_next(&self) -> Result<(MixedPoint, SelectionDiagnostics)> {
        let data = self.model_dataset()?;
        let n = data.len();
        let (model, fallback) = self.fit_with_fallback(&data)?;
        let acq = self.config.acquisition;
        let b = beta(n, self.config.domain.qualitative().combinations(), acq.alpha)?;
        let best_observed = data.responses().iter().copied().fold(f64::INFINITY, f64::min);
        let ctx = ScoreContext {
            best_observed: Some(best_observed),
            beta: Some(b),
        };
        let mut rng = stream(self.config.seed, n as u64);
        let nc = self.config.candidates_per_combination;
        let mut pool = candidate_pool(&data, nc, &mut rng)?;
        if acq.strategy == Strategy::AdaptiveCee {
            let region = region_from_predictions(&model.predict_many(&pool.points)?, b)?;
            if region.fraction() < SPARSE_REGION_FRACTION {
                pool = candidate_pool(&data, 2 * nc, &mut rng)?;
            }
        }
        let Proposal { mut point, selection } = suggest_from_pool(&model, &pool, &acq, &ctx)?;
        let mut score = selection.score;
        if self.config.polish {
            let threshold = selection.region.as_ref().map(|r| r.threshold);
            let objective = |x: &[f64]| {
                let w = MixedPoint::new(x.to_vec(), point.z.clone());
                if data.points().iter().any(|t| t.coincides(&w, DUPLICATE_TOL)) {
                    return f64::NAN;
                }
                let pred = model.predict_unchecked(&w);
                if let Some(t) = threshold {
                    if pred.mean - b.sqrt() * pred.sd > t {
                        return f64::NAN;
                    }
                }
                crate::acquisition::score(&pred, &acq, &ctx).unwrap_or(f64::NAN)
            };
            let radius = 1.0 / pool.per_combination as f64;
            let (x, v) = golden_polish(&point.x, score, radius, POLISH_EVALS, objective);
            point.x = x;
            score = v;
        }
        let pred = model.predict_unchecked(&point);
        let cee = pred.mean - acq.rho * pred.sd;
        Ok((
            point,
            SelectionDiagnostics {
                cee_value: self.sign() * cee,
                score,
                beta: b,
                region_size: selection.region.as_ref().map(|r| r.size()),
                candidates: pool.len(),
                log_likelihood: model.log_likelihood(),
                fallback,
            },
        ))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CampaignDoc::from_state(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CampaignDoc = serde_json::from_str(text)?;
        doc.into_state()
    }

    /// Writes the state file atomically (temporary file, then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()? + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Why a closed-loop run stopped early, with everything observed so far.
#[derive(Debug)]
pub struct CampaignAbort {
    pub state: Option<Box<CampaignState>>,
    pub error: Error,
}

impl std::fmt::Display for CampaignAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.state {
            Some(s) => write!(f, "{} (after {} observations)", self.error, s.points.len()),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for CampaignAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs the whole budget against `objective` (user-unit points).
pub fn run_campaign<F>(mut objective: F, config: CampaignConfig) -> std::result::Result<CampaignState, CampaignAbort>
where
    F: FnMut(&MixedPoint) -> f64,
{
    let mut state = CampaignState::new(config).map_err(|error| CampaignAbort { state: None, error })?;
    while !state.is_exhausted() {
        let step = state.ask().and_then(|w| {
            let y = objective(&w);
            state.tell(y)
        });
        if let Err(error) = step {
            return Err(CampaignAbort {
                state: Some(Box::new(state)),
                error,
            });
        }
    }
    Ok(state)
}

/// The one-shot baseline: evaluates a size-`budget` random design.
pub fn run_ra<F>(objective: F, mut config: CampaignConfig) -> std::result::Result<CampaignState, CampaignAbort>
where
    F: FnMut(&MixedPoint) -> f64,
{
    config.acquisition.strategy = Strategy::Ra;
    run_campaign(objective, config)
}

/// User-unit point with level labels, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub z: Vec<String>,
}

impl LabeledPoint {
    pub fn from_point(w: &MixedPoint, domain: &DomainSpec) -> Self {
        let space = domain.qualitative();
        Self {
            x: w.x.clone(),
            z: w.z.iter().enumerate().map(|(j, &l)| space.label(j, l)).collect(),
        }
    }

    pub fn to_point(&self, domain: &DomainSpec) -> Result<MixedPoint> {
        let space = domain.qualitative();
        if self.z.len() != space.q() {
            return Err(Error::Persistence(format!(
                "point has {} levels, domain has {} qualitative factors",
                self.z.len(),
                space.q()
            )));
        }
        let z = self
            .z
            .iter()
            .enumerate()
            .map(|(j, label)| {
                space
                    .level_of(j, label)
                    .ok_or_else(|| Error::Persistence(format!("unknown level {label:?} for factor {}", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let w = MixedPoint::new(self.x.clone(), z);
        domain
            .validate_user_point(&w)
            .map_err(|e| Error::Persistence(e.to_string()))?;
        Ok(w)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngStateDoc {
    seed: u64,
    /// Stream index of the next proposal (the observation count).
    stream: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PendingDoc {
    point: LabeledPoint,
    diagnostics: Option<SelectionDiagnostics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDoc {
    iteration: usize,
    point: LabeledPoint,
    response: f64,
    best_value: f64,
    diagnostics: Option<SelectionDiagnostics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignDoc {
    version: u32,
    config: CampaignConfig,
    points: Vec<LabeledPoint>,
    responses: Vec<f64>,
    iteration: usize,
    phase: Phase,
    pending: Option<PendingDoc>,
    rng_state: RngStateDoc,
    best_value: Option<f64>,
    history: Vec<RecordDoc>,
}

impl CampaignDoc {
    fn from_state(s: &CampaignState) -> Self {
        let d = &s.config.domain;
        Self {
            version: FORMAT_VERSION,
            config: s.config.clone(),
            points: s.points.iter().map(|w| LabeledPoint::from_point(w, d)).collect(),
            responses: s.responses.clone(),
            iteration: s.iteration(),
            phase: s.phase,
            pending: s.pending.as_ref().map(|p| PendingDoc {
                point: LabeledPoint::from_point(&p.point, d),
                diagnostics: p.diagnostics.clone(),
            }),
            rng_state: RngStateDoc {
                seed: s.config.seed,
                stream: s.points.len() as u64,
            },
            best_value: s.best_value(),
            history: s
                .history
                .iter()
                .map(|r| RecordDoc {
                    iteration: r.iteration,
                    point: LabeledPoint::from_point(&r.point, d),
                    response: r.response,
                    best_value: r.best_value,
                    diagnostics: r.diagnostics.clone(),
                })
                .collect(),
        }
    }

    fn into_state(self) -> Result<CampaignState> {
        let bad = |msg: String| Err(Error::Persistence(msg));
        if self.version != FORMAT_VERSION {
            return bad(format!("unsupported campaign format version {}", self.version));
        }
        self.config
            .validate()
            .map_err(|e| Error::Persistence(format!("invalid config: {e}")))?;
        let d = &self.config.domain;
        let points = self.points.iter().map(|p| p.to_point(d)).collect::<Result<Vec<_>>>()?;
        if points.len() != self.responses.len() {
            return bad(format!("{} points but {} responses", points.len(), self.responses.len()));
        }
        if points.len() > self.config.budget() {
            return bad("more observations than the budget allows".into());
        }
        if self.responses.iter().any(|y| !y.is_finite()) {
            return bad("non-finite response".into());
        }
        if self.rng_state.seed != self.config.seed || self.rng_state.stream != points.len() as u64 {
            return bad("rng_state does not match the config seed and observation count".into());
        }
        let pending = match (self.phase, self.pending) {
            (Phase::AwaitingResponse, Some(p)) => Some(Pending {
                point: p.point.to_point(d)?,
                diagnostics: p.diagnostics,
            }),
            (Phase::Ready, None) => None,
            _ => return bad("phase and pending point disagree".into()),
        };
        let history = self
            .history
            .into_iter()
            .map(|r| {
                Ok(IterationRecord {
                    iteration: r.iteration,
                    point: r.point.to_point(d)?,
                    response: r.response,
                    best_value: r.best_value,
                    diagnostics: r.diagnostics,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let state = CampaignState {
            config: self.config,
            points,
            responses: self.responses,
            phase: self.phase,
            pending,
            history,
        };
        let expected_history = state.points.len().saturating_sub(state.config.init.n_runs);
        if self.iteration != state.history.len() || state.history.len() != expected_history {
            return bad("history length does not match the observation count".into());
        }
        for (k, r) in state.history.iter().enumerate() {
            let t = state.config.init.n_runs + k;
            if r.iteration != k + 1 || r.point != state.points[t] || r.response.to_bits() != state.responses[t].to_bits() {
                return bad(format!("history record {} disagrees with the observations", k + 1));
            }
        }
        if self.best_value.map(f64::to_bits) != state.best_value().map(f64::to_bits) {
            return bad("best_value does not match the responses".into());
        }
        Ok(state)
    }
}
