//! Additive Gaussian process surrogate.
//!
//! The mean is profiled out of the likelihood, so fitting optimizes only the
//! kernel parameters, through an unconstrained-by-transform vector:
//! `log sigma_j^2`, then `log theta_ji` row by row, then one logit per
//! hypersphere angle (`angle = pi * sigmoid(u)`).
//!
//! The fitted covariance carries a small relative jitter on its diagonal.
//! Prediction treats that jitter as a microscale nugget: a query that
//! coincides with a training input sees the nugget in its cross-covariance,
//! which keeps the surrogate an exact interpolator at observed inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{hypersphere_factor, AdditiveKernel, KernelParams, MixedPoint, QualitativeSpace};
use crate::optim::BoxLbfgs;

const ANGLE_EPS: f64 = 1e-6;
const LOGIT_LIMIT: f64 = 12.0;
const MAX_JITTER_ESCALATIONS: u32 = 3;
/// Distance on the unit scale under which a query counts as a training input.
const COINCIDENCE_TOL: f64 = 1e-12;

/// Observed inputs (unit scale) and responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    p: usize,
    space: QualitativeSpace,
    points: Vec<MixedPoint>,
    responses: Vec<f64>,
}

impl Dataset {
    pub fn new(
        p: usize,
        space: QualitativeSpace,
        points: Vec<MixedPoint>,
        responses: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != responses.len() {
            return Err(Error::invalid(format!(
                "{} points but {} responses",
                points.len(),
                responses.len()
            )));
        }
        for w in &points {
            w.validate(p, &space, true)?;
        }
        if let Some(y) = responses.iter().find(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite response {y}")));
        }
        Ok(Self {
            p,
            space,
            points,
            responses,
        })
    }

    /// An empty dataset over the given space.
    pub fn empty(p: usize, space: QualitativeSpace) -> Self {
        Self {
            p,
            space,
            points: Vec::new(),
            responses: Vec::new(),
        }
    }

    pub fn push(&mut self, w: MixedPoint, y: f64) -> Result<()> {
        w.validate(self.p, &self.space, true)?;
        if !y.is_finite() {
            return Err(Error::invalid(format!("non-finite response {y}")));
        }
        self.points.push(w);
        self.responses.push(y);
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn space(&self) -> &QualitativeSpace {
        &self.space
    }

    pub fn points(&self) -> &[MixedPoint] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the smallest response (first on ties).
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &y) in self.responses.iter().enumerate() {
            if best.is_none_or(|b| y < self.responses[b]) {
                best = Some(i);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    /// Relative change in the objective that stops a local search.
    pub tolerance: f64,
    pub theta_bounds: (f64, f64),
    /// Bounds on each `sigma_j^2` as multiples of the sample variance of `y`.
    pub sigma2_bounds: (f64, f64),
    /// Diagonal jitter as a multiple of `sum_j sigma_j^2`.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 5,
            max_iters: 200,
            tolerance: 1e-6,
            theta_bounds: (1e-3, 1e3),
            sigma2_bounds: (1e-8, 1e3),
            jitter: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo > 0.0 && lo < hi && hi.is_finite();
        if self.n_starts == 0 {
            return Err(Error::invalid("n_starts must be at least 1"));
        }
        if !ordered(self.theta_bounds) || !ordered(self.sigma2_bounds) {
            return Err(Error::invalid("fit bounds must be positive and ordered"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) || self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::invalid("jitter must be nonnegative and tolerance positive"));
        }
        Ok(())
    }
}

/// Normal predictive distribution at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDist {
    pub mean: f64,
    pub sd: f64,
}

/// Maps kernel parameters to and from the optimizer's free vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    p: usize,
    space: QualitativeSpace,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl ParamLayout {
    pub fn new(p: usize, space: &QualitativeSpace) -> Self {
        Self {
            p,
            space: space.clone(),
        }
    }

    fn q(&self) -> usize {
        self.space.q()
    }

    fn angle_count(&self, j: usize) -> usize {
        let m = self.space.levels(j);
        m * (m - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.q() + self.p * self.q() + (0..self.q()).map(|j| self.angle_count(j)).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, params: &KernelParams) -> Vec<f64> {
        let mut free = Vec::with_capacity(self.len());
        free.extend(params.sigma2.iter().map(|s| s.ln()));
        for row in &params.theta {
            free.extend(row.iter().map(|t| t.ln()));
        }
        for angles in &params.angles {
            free.extend(angles.iter().map(|&a| {
                let s = (a / std::f64::consts::PI).clamp(1e-300, 1.0 - 1e-16);
                (s / (1.0 - s)).ln().clamp(-LOGIT_LIMIT, LOGIT_LIMIT)
            }));
        }
        free
    }

    pub fn decode(&self, free: &[f64]) -> KernelParams {
        let q = self.q();
        let mut it = free.iter().copied();
        let sigma2 = (0..q).map(|_| it.next().unwrap().exp()).collect();
        let theta = (0..q)
            .map(|_| (0..self.p).map(|_| it.next().unwrap().exp()).collect())
            .collect();
        let angles = (0..q)
            .map(|j| {
                (0..self.angle_count(j))
                    .map(|_| {
                        let a = std::f64::consts::PI * sigmoid(it.next().unwrap());
                        a.clamp(ANGLE_EPS, std::f64::consts::PI - ANGLE_EPS)
                    })
                    .collect()
            })
            .collect();
        KernelParams {
            sigma2,
            theta,
            angles,
        }
    }

    /// Box in free coordinates implied by `config` and the response scale.
    fn bounds(&self, config: &FitConfig, var_scale: f64) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.len());
        let mut hi = Vec::with_capacity(self.len());
        for _ in 0..self.q() {
            lo.push((config.sigma2_bounds.0 * var_scale).ln());
            hi.push((config.sigma2_bounds.1 * var_scale).ln());
        }
        for _ in 0..self.p * self.q() {
            lo.push(config.theta_bounds.0.ln());
            hi.push(config.theta_bounds.1.ln());
        }
        while lo.len() < self.len() {
            lo.push(-LOGIT_LIMIT);
            hi.push(LOGIT_LIMIT);
        }
        (lo, hi)
    }
}

/// Response variance used to scale the variance bounds (1 for constant data).
fn variance_scale(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 && var.is_finite() {
        var
    } else {
        1.0
    }
}

/// Everything one objective evaluation produces.
struct Evaluation {
    value: f64,
    gradient: Option<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    mu: f64,
    weights: DVector<f64>,
}

/// Per-component pieces of the covariance matrix.
struct Components {
    /// `exp(-sum_i theta_ji d_i^2)` for each component.
    gauss: Vec<DMatrix<f64>>,
    /// `sigma_j^2 * T_j[z_a, z_b] * gauss_j[a, b]`.
    scaled: Vec<DMatrix<f64>>,
}

fn components(points: &[MixedPoint], kernel: &AdditiveKernel) -> Components {
    let n = points.len();
    let mut gauss = Vec::with_capacity(kernel.q());
    let mut scaled = Vec::with_capacity(kernel.q());
    for j in 0..kernel.q() {
        let theta = &kernel.theta()[j];
        let t = &kernel.correlations()[j];
        let mut e = DMatrix::from_element(n, n, 1.0);
        let mut c = DMatrix::zeros(n, n);
        for a in 0..n {
            c[(a, a)] = kernel.sigma2()[j];
            for b in 0..a {
                let d2: f64 = theta
                    .iter()
                    .zip(points[a].x.iter().zip(&points[b].x))
                    .map(|(th, (u, v))| th * (u - v) * (u - v))
                    .sum();
                let g = (-d2).exp();
                let v = kernel.sigma2()[j] * t[(points[a].z[j] - 1, points[b].z[j] - 1)] * g;
                e[(a, b)] = g;
                e[(b, a)] = g;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        gauss.push(e);
        scaled.push(c);
    }
    Components { gauss, scaled }
}

/// Factors `Phi = sum_j C_j + jitter * I`, escalating the jitter on failure.
fn factor(
    comps: &Components,
    total_variance: f64,
    jitter_rel: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = comps.scaled[0].nrows();
    let mut base = DMatrix::zeros(n, n);
    for c in &comps.scaled {
        base += c;
    }
    let mut jitter = jitter_rel * total_variance;
    for attempt in 0..=MAX_JITTER_ESCALATIONS {
        let mut phi = base.clone();
        for a in 0..n {
            phi[(a, a)] += jitter;
        }
        if let Some(chol) = phi.cholesky() {
            return Ok((chol, jitter));
        }
        if attempt < MAX_JITTER_ESCALATIONS {
            jitter = if jitter > 0.0 {
                jitter * 10.0
            } else {
                1e-10 * total_variance
            };
        }
    }
    Err(Error::Numerical(format!(
        "covariance matrix not positive definite even with jitter {jitter:e}"
    )))
}

/// Profiled mean `(1' Phi^-1 y) / (1' Phi^-1 1)` from a factored `Phi`.
pub fn profile_mu(chol: &Cholesky<f64, Dyn>, y: &[f64]) -> Result<f64> {
    let n = y.len();
    if chol.l_dirty().nrows() != n {
        return Err(Error::invalid("factor and response sizes differ"));
    }
    let inv_one = chol.solve(&DVector::from_element(n, 1.0));
    let denom = inv_one.sum();
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::Numerical("1' Phi^-1 1 is not positive".into()));
    }
    Ok(inv_one.dot(&DVector::from_column_slice(y)) / denom)
}

fn evaluate(
    layout: &ParamLayout,
    free: &[f64],
    points: &[MixedPoint],
    y: &[f64],
    jitter_rel: f64,
    with_gradient: bool,
) -> Result<Evaluation> {
    let params = layout.decode(free);
    let kernel = AdditiveKernel::new(&params, layout.p, &layout.space)?;
    let comps = components(points, &kernel);
    let total = kernel.total_variance();
    let (chol, jitter) = factor(&comps, total, jitter_rel)?;

    let n = points.len();
    let yv = DVector::from_column_slice(y);
    let mu = profile_mu(&chol, y)?;
    let resid = yv.map(|v| v - mu);
    let weights = chol.solve(&resid);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let value = log_det + resid.dot(&weights);
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite likelihood".into()));
    }

    let gradient = with_gradient.then(|| {
        // d/dk [log|Phi| + r' Phi^-1 r] = sum_ab (Phi^-1 - a a')_ab dPhi_ab,
        // with mu held at its profiled optimum (its own derivative vanishes).
        let mut w = chol.inverse();
        w -= &weights * weights.transpose();
        let trace_w = w.trace();
        let mut grad = Vec::with_capacity(layout.len());
        for j in 0..kernel.q() {
            let mut g = comps.scaled[j].component_mul(&w).sum();
            if total > 0.0 {
                g += jitter * kernel.sigma2()[j] / total * trace_w;
            }
            grad.push(g);
        }
        for j in 0..kernel.q() {
            for i in 0..layout.p {
                let theta = kernel.theta()[j][i];
                let mut g = 0.0;
                for a in 0..n {
                    for b in 0..a {
                        let d = points[a].x[i] - points[b].x[i];
                        g += 2.0 * w[(a, b)] * comps.scaled[j][(a, b)] * d * d;
                    }
                }
                grad.push(-theta * g);
            }
        }
        let mut offset = layout.q() * (1 + layout.p);
        for j in 0..kernel.q() {
            let m = layout.space.levels(j);
            // Level-by-level aggregate of W o sigma_j^2 E_j.
            let mut agg = DMatrix::zeros(m, m);
            for a in 0..n {
                for b in 0..n {
                    agg[(points[a].z[j] - 1, points[b].z[j] - 1)] +=
                        w[(a, b)] * kernel.sigma2()[j] * comps.gauss[j][(a, b)];
                }
            }
            let angles = &params.angles[j];
            let l = hypersphere_factor(angles, m).expect("decoded angles are valid");
            let gl = &agg * &l;
            let mut k = 0;
            for r in 1..m {
                let row = &angles[k..k + r];
                for s in 0..r {
                    let dl = hypersphere_row_derivative(row, s);
                    let dtrace: f64 = (0..=r).map(|c| gl[(r, c)] * dl[c]).sum();
                    let a = row[s];
                    let sig = a / std::f64::consts::PI;
                    let chain = if a <= ANGLE_EPS || a >= std::f64::consts::PI - ANGLE_EPS {
                        0.0
                    } else {
                        std::f64::consts::PI * sig * (1.0 - sig)
                    };
                    grad.push(2.0 * dtrace * chain);
                }
                k += r;
            }
            offset += k;
        }
        debug_assert_eq!(offset, layout.len());
        grad
    });

    Ok(Evaluation {
        value,
        gradient,
        chol,
        jitter,
        mu,
        weights,
    })
}

/// Derivative of row `r = row.len()` of the hypersphere factor with respect
/// to its `s`-th angle; entries `0..=r`.
fn hypersphere_row_derivative(row: &[f64], s: usize) -> Vec<f64> {
    let r = row.len();
    let mut out = vec![0.0; r + 1];
    for (c, slot) in out.iter_mut().enumerate().skip(s) {
        let mut prod = 1.0;
        for (k, &a) in row.iter().enumerate().take(c.min(r)) {
            prod *= if k == s { a.cos() } else { a.sin() };
        }
        *slot = if c == s {
            -prod * row[s].sin()
        } else if c < r {
            prod * row[c].cos()
        } else {
            prod
        };
    }
    out
}

/// Profiled objective `log|Phi| + y'Phi^-1 y - (1'Phi^-1 y)^2 / (1'Phi^-1 1)`.
///
/// Halving it and adding `n log(2 pi) / 2` gives the negative log-likelihood
/// at the profiled mean.
pub fn neg_log_likelihood(
    layout: &ParamLayout,
    free: &[f64],
    data: &Dataset,
    jitter: f64,
) -> Result<f64> {
    check_layout(layout, free, data)?;
    evaluate(layout, free, data.points(), data.responses(), jitter, false).map(|e| e.value)
}

/// Analytic gradient of [`neg_log_likelihood`] in free coordinates.
pub fn neg_log_likelihood_gradient(
    layout: &ParamLayout,
    free: &[f64],
    data: &Dataset,
    jitter: f64,
) -> Result<Vec<f64>> {
    check_layout(layout, free, data)?;
    evaluate(layout, free, data.points(), data.responses(), jitter, true)
        .map(|e| e.gradient.expect("gradient requested"))
}

fn check_layout(layout: &ParamLayout, free: &[f64], data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if *layout != ParamLayout::new(data.p(), data.space()) || free.len() != layout.len() {
        return Err(Error::invalid("free parameter vector does not match the dataset"));
    }
    if data.space().q() == 0 {
        return Err(Error::invalid("the additive model needs at least one qualitative factor"));
    }
    Ok(())
}

/// A fitted additive Gaussian process.
#[derive(Debug, Clone)]
pub struct AgpModel {
    params: KernelParams,
    kernel: AdditiveKernel,
    mu_hat: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    dataset: Dataset,
    jitter: f64,
    log_likelihood: f64,
}

impl AgpModel {
    /// Conditions the process on `data` with fixed kernel parameters.
    pub fn with_params(data: &Dataset, params: &KernelParams, jitter_rel: f64) -> Result<Self> {
        let layout = ParamLayout::new(data.p(), data.space());
        let free = layout.encode(params);
        check_layout(&layout, &free, data)?;
        let kernel = AdditiveKernel::new(params, data.p(), data.space())?;
        let comps = components(data.points(), &kernel);
        let (chol, jitter) = factor(&comps, kernel.total_variance(), jitter_rel)?;
        let mu_hat = profile_mu(&chol, data.responses())?;
        let resid = DVector::from_iterator(data.len(), data.responses().iter().map(|y| y - mu_hat));
        let weights = chol.solve(&resid);
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let objective = log_det + resid.dot(&weights);
        Ok(Self::assemble(params.clone(), kernel, mu_hat, chol, weights, data.clone(), jitter, objective))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        params: KernelParams,
        kernel: AdditiveKernel,
        mu_hat: f64,
        chol: Cholesky<f64, Dyn>,
        weights: DVector<f64>,
        dataset: Dataset,
        jitter: f64,
        objective: f64,
    ) -> Self {
        let n = dataset.len() as f64;
        let log_likelihood = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * objective;
        Self {
            params,
            kernel,
            mu_hat,
            chol,
            weights,
            dataset,
            jitter,
            log_likelihood,
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn kernel(&self) -> &AdditiveKernel {
        &self.kernel
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    /// Lower Cholesky factor of the jittered covariance matrix.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Absolute diagonal jitter actually used.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn total_variance(&self) -> f64 {
        self.kernel.total_variance()
    }

    pub fn predict(&self, w0: &MixedPoint) -> Result<PredictiveDist> {
        w0.validate(self.dataset.p(), self.dataset.space(), false)?;
        Ok(self.predict_unchecked(w0))
    }

    pub(crate) fn predict_unchecked(&self, w0: &MixedPoint) -> PredictiveDist {
        let points = self.dataset.points();
        let r0 = DVector::from_iterator(
            points.len(),
            points.iter().map(|w| {
                let c = self.kernel.cov_unchecked(w0, w);
                if w0.coincides(w, COINCIDENCE_TOL) {
                    c + self.jitter
                } else {
                    c
                }
            }),
        );
        let mean = self.mu_hat + r0.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r0)
            .unwrap_or_else(|| DVector::zeros(points.len()));
        let total = self.kernel.total_variance();
        let var = (total - v.norm_squared()).clamp(0.0, total);
        PredictiveDist {
            mean,
            sd: var.sqrt(),
        }
    }

    pub fn predict_many(&self, points: &[MixedPoint]) -> Result<Vec<PredictiveDist>> {
        for w in points {
            w.validate(self.dataset.p(), self.dataset.space(), false)?;
        }
        Ok(points.iter().map(|w| self.predict_unchecked(w)).collect())
    }
}

/// Fits the model by multi-start maximization of the profiled likelihood.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<AgpModel> {
    config.validate()?;
    let layout = ParamLayout::new(data.p(), data.space());
    if data.is_empty() {
        return Err(Error::invalid("cannot fit an empty dataset"));
    }
    if data.space().q() == 0 {
        return Err(Error::invalid("the additive model needs at least one qualitative factor"));
    }
    let y = data.responses();
    let scale = variance_scale(y);
    let (lo, hi) = layout.bounds(config, scale);
    let optimizer = BoxLbfgs {
        max_iters: config.max_iters,
        tolerance: config.tolerance,
        memory: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut starts = Vec::with_capacity(config.n_starts);
    starts.push(layout.encode(&KernelParams::neutral(data.p(), data.space(), scale)));
    while starts.len() < config.n_starts {
        starts.push(lo.iter().zip(&hi).map(|(&l, &h)| rng.gen_range(l..=h)).collect::<Vec<_>>());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut failures = Vec::new();
    for (k, start) in starts.iter().enumerate() {
        let objective = |free: &[f64]| {
            evaluate(&layout, free, data.points(), y, config.jitter, true)
                .ok()
                .map(|e| (e.value, e.gradient.unwrap()))
        };
        match optimizer.minimize(objective, start, &lo, &hi) {
            Some(m) if best.as_ref().is_none_or(|(v, _)| m.value < *v) => best = Some((m.value, m.x)),
            Some(_) => {}
            None => failures.push(format!("start {k}: objective not evaluable at the initial point")),
        }
    }
    let Some((_, free)) = best else {
        return Err(Error::FitFailure {
            starts: config.n_starts,
            diagnostics: failures.join("; "),
        });
    };

    let e = evaluate(&layout, &free, data.points(), y, config.jitter, false)?;
    let params = layout.decode(&free);
    let kernel = AdditiveKernel::new(&params, data.p(), data.space())?;
    Ok(AgpModel::assemble(params, kernel, e.mu, e.chol, e.weights, data.clone(), e.jitter, e.value))
}
