//! Covariance primitives for mixed quantitative/qualitative inputs.
//!
//! Each qualitative factor `j` contributes one additive component
//! `sigma2[j] * T_j[z1j, z2j] * exp(-sum_i theta[j][i] * (x1i - x2i)^2)`,
//! where `T_j` is a unit-diagonal correlation matrix over the factor's levels.
//! Continuous coordinates are always on the unit scale `[0, 1]` here; the
//! [`DomainSpec`] maps between user units and that scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level counts (and optional level labels) of the qualitative factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitativeSpace {
    level_counts: Vec<usize>,
    labels: Option<Vec<Vec<String>>>,
}

impl QualitativeSpace {
    pub fn new(level_counts: Vec<usize>) -> Result<Self> {
        if let Some((j, m)) = level_counts.iter().enumerate().find(|(_, &m)| m < 2) {
            return Err(Error::invalid(format!(
                "qualitative factor {} has {m} level(s); at least 2 required",
                j + 1
            )));
        }
        Ok(Self {
            level_counts,
            labels: None,
        })
    }

    /// Builds a space whose level counts are taken from the label lists.
    pub fn with_labels(labels: Vec<Vec<String>>) -> Result<Self> {
        let mut space = Self::new(labels.iter().map(Vec::len).collect())?;
        for (j, levels) in labels.iter().enumerate() {
            for (a, label) in levels.iter().enumerate() {
                if levels[..a].contains(label) {
                    return Err(Error::invalid(format!(
                        "duplicate level label {label:?} in qualitative factor {}",
                        j + 1
                    )));
                }
            }
        }
        // Plain level numbers are the unlabeled form; keep one canonical representation.
        let numeric = labels
            .iter()
            .all(|levels| levels.iter().enumerate().all(|(a, l)| *l == (a + 1).to_string()));
        if !numeric {
            space.labels = Some(labels);
        }
        Ok(space)
    }

    /// Number of qualitative factors `q`.
    pub fn q(&self) -> usize {
        self.level_counts.len()
    }

    pub fn level_counts(&self) -> &[usize] {
        &self.level_counts
    }

    pub fn levels(&self, j: usize) -> usize {
        self.level_counts[j]
    }

    /// Number of level combinations `M = prod m_j` (1 when `q = 0`).
    pub fn combinations(&self) -> usize {
        self.level_counts.iter().product()
    }

    /// Label of 1-based `level` of factor `j`; the level number when unlabeled.
    pub fn label(&self, j: usize, level: usize) -> String {
        match &self.labels {
            Some(labels) => labels[j][level - 1].clone(),
            None => level.to_string(),
        }
    }

    /// Inverse of [`label`](Self::label).
    pub fn level_of(&self, j: usize, label: &str) -> Option<usize> {
        match &self.labels {
            Some(labels) => labels[j].iter().position(|l| l == label).map(|i| i + 1),
            None => label
                .parse::<usize>()
                .ok()
                .filter(|&l| l >= 1 && l <= self.level_counts[j]),
        }
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }
}

/// One design point: unit-scale continuous coordinates plus 1-based level indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPoint {
    pub x: Vec<f64>,
    pub z: Vec<usize>,
}

impl MixedPoint {
    pub fn new(x: Vec<f64>, z: Vec<usize>) -> Self {
        Self { x, z }
    }

    /// Checks dimensions against `p` and `space`, levels against their
    /// ranges, and (when `unit` is set) coordinates against `[0, 1]`.
    pub fn validate(&self, p: usize, space: &QualitativeSpace, unit: bool) -> Result<()> {
        if self.x.len() != p || self.z.len() != space.q() {
            return Err(Error::invalid(format!(
                "point has {} continuous / {} qualitative coordinates, expected {p} / {}",
                self.x.len(),
                self.z.len(),
                space.q()
            )));
        }
        for (j, &level) in self.z.iter().enumerate() {
            if level < 1 || level > space.levels(j) {
                return Err(Error::invalid(format!(
                    "level {level} of qualitative factor {} outside 1..={}",
                    j + 1,
                    space.levels(j)
                )));
            }
        }
        for &v in &self.x {
            if !v.is_finite() || (unit && !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!("continuous coordinate {v} out of range")));
            }
        }
        Ok(())
    }

    /// True when both points share `z` and their `x` lie within `tol` (Euclidean).
    pub fn coincides(&self, other: &MixedPoint, tol: f64) -> bool {
        self.z == other.z
            && self
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                <= tol
    }
}

/// The design space in user units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainDoc", into = "DomainDoc")]
pub struct DomainSpec {
    continuous_bounds: Vec<(f64, f64)>,
    qualitative: QualitativeSpace,
    continuous_names: Vec<String>,
    qualitative_names: Vec<String>,
}

impl DomainSpec {
    pub fn new(continuous_bounds: Vec<(f64, f64)>, qualitative: QualitativeSpace) -> Result<Self> {
        for (i, &(lo, hi)) in continuous_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "continuous factor {} has invalid bounds ({lo}, {hi})",
                    i + 1
                )));
            }
        }
        let continuous_names = (1..=continuous_bounds.len()).map(|i| format!("x{i}")).collect();
        let qualitative_names = (1..=qualitative.q()).map(|j| format!("z{j}")).collect();
        Ok(Self {
            continuous_bounds,
            qualitative,
            continuous_names,
            qualitative_names,
        })
    }

    pub fn with_names(mut self, continuous: Vec<String>, qualitative: Vec<String>) -> Result<Self> {
        if continuous.len() != self.p() || qualitative.len() != self.q() {
            return Err(Error::invalid("factor name count does not match the domain"));
        }
        self.continuous_names = continuous;
        self.qualitative_names = qualitative;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.continuous_bounds.len()
    }

    pub fn q(&self) -> usize {
        self.qualitative.q()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.continuous_bounds
    }

    pub fn qualitative(&self) -> &QualitativeSpace {
        &self.qualitative
    }

    pub fn continuous_names(&self) -> &[String] {
        &self.continuous_names
    }

    pub fn qualitative_names(&self) -> &[String] {
        &self.qualitative_names
    }

    pub fn to_unit(&self, user: &[f64]) -> Vec<f64> {
        user.iter()
            .zip(&self.continuous_bounds)
            .map(|(&v, &(lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.continuous_bounds)
            .map(|(&u, &(lo, hi))| lo + u * (hi - lo))
            .collect()
    }

    pub fn point_to_unit(&self, user: &MixedPoint) -> MixedPoint {
        MixedPoint::new(self.to_unit(&user.x), user.z.clone())
    }

    pub fn point_from_unit(&self, unit: &MixedPoint) -> MixedPoint {
        MixedPoint::new(self.from_unit(&unit.x), unit.z.clone())
    }

    /// Validates a user-unit point, allowing a relative slack of 1e-12 at the bounds.
    pub fn validate_user_point(&self, w: &MixedPoint) -> Result<()> {
        w.validate(self.p(), &self.qualitative, false)?;
        for (i, (&v, &(lo, hi))) in w.x.iter().zip(&self.continuous_bounds).enumerate() {
            let slack = 1e-12 * (hi - lo);
            if v < lo - slack || v > hi + slack {
                return Err(Error::invalid(format!(
                    "{} = {v} outside [{lo}, {hi}]",
                    self.continuous_names[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContinuousDoc {
    name: String,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QualitativeDoc {
    name: String,
    levels: Vec<String>,
}

/// On-disk shape of a [`DomainSpec`].
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDoc {
    #[serde(default)]
    continuous: Vec<ContinuousDoc>,
    #[serde(default)]
    qualitative: Vec<QualitativeDoc>,
}

impl TryFrom<DomainDoc> for DomainSpec {
    type Error = Error;

    fn try_from(doc: DomainDoc) -> Result<Self> {
        let space = QualitativeSpace::with_labels(
            doc.qualitative.iter().map(|f| f.levels.clone()).collect(),
        )?;
        DomainSpec::new(doc.continuous.iter().map(|c| (c.lo, c.hi)).collect(), space)?.with_names(
            doc.continuous.into_iter().map(|c| c.name).collect(),
            doc.qualitative.into_iter().map(|f| f.name).collect(),
        )
    }
}

impl From<DomainSpec> for DomainDoc {
    fn from(d: DomainSpec) -> Self {
        let continuous = d
            .continuous_bounds
            .iter()
            .zip(&d.continuous_names)
            .map(|(&(lo, hi), name)| ContinuousDoc {
                name: name.clone(),
                lo,
                hi,
            })
            .collect();
        let qualitative = (0..d.q())
            .map(|j| QualitativeDoc {
                name: d.qualitative_names[j].clone(),
                levels: (1..=d.qualitative.levels(j))
                    .map(|l| d.qualitative.label(j, l))
                    .collect(),
            })
            .collect();
        DomainDoc {
            continuous,
            qualitative,
        }
    }
}

/// Raw kernel parameters: variance components, inverse length-scales
/// (`theta[j][i]`, unit scale) and hypersphere angles per qualitative factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma2: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub angles: Vec<Vec<f64>>,
}

impl KernelParams {
    /// Number of free parameters excluding the mean: `q + sum m_j(m_j-1)/2 + p q`.
    pub fn free_count(p: usize, space: &QualitativeSpace) -> usize {
        let q = space.q();
        q + space
            .level_counts()
            .iter()
            .map(|&m| m * (m - 1) / 2)
            .sum::<usize>()
            + p * q
    }

    /// Parameters with identity level correlations, unit length-scales and
    /// the total variance split evenly across components.
    pub fn neutral(p: usize, space: &QualitativeSpace, total_variance: f64) -> Self {
        let q = space.q();
        Self {
            sigma2: vec![total_variance / q.max(1) as f64; q],
            theta: vec![vec![1.0; p]; q],
            angles: space
                .level_counts()
                .iter()
                .map(|&m| vec![std::f64::consts::FRAC_PI_2; m * (m - 1) / 2])
                .collect(),
        }
    }

    pub fn total_variance(&self) -> f64 {
        self.sigma2.iter().sum()
    }
}

/// A validated, ready-to-evaluate additive covariance.
#[derive(Debug, Clone)]
pub struct AdditiveKernel {
    sigma2: Vec<f64>,
    theta: Vec<Vec<f64>>,
    corr: Vec<DMatrix<f64>>,
}

impl AdditiveKernel {
    pub fn new(params: &KernelParams, p: usize, space: &QualitativeSpace) -> Result<Self> {
        let q = space.q();
        if q == 0 {
            return Err(Error::invalid(
                "the additive kernel needs at least one qualitative factor",
            ));
        }
        if params.sigma2.len() != q || params.theta.len() != q || params.angles.len() != q {
            return Err(Error::invalid(format!(
                "kernel parameters do not describe {q} qualitative factor(s)"
            )));
        }
        let corr = params
            .angles
            .iter()
            .zip(space.level_counts())
            .map(|(angles, &m)| hypersphere_to_corr(angles, m))
            .collect::<Result<Vec<_>>>()?;
        Self::from_correlations(params.sigma2.clone(), params.theta.clone(), corr, p)
    }

    /// Builds a kernel from explicit level-correlation matrices.
    pub fn from_correlations(
        sigma2: Vec<f64>,
        theta: Vec<Vec<f64>>,
        corr: Vec<DMatrix<f64>>,
        p: usize,
    ) -> Result<Self> {
        if sigma2.is_empty() || theta.len() != sigma2.len() || corr.len() != sigma2.len() {
            return Err(Error::invalid("mismatched kernel component counts"));
        }
        if sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("variance components must be positive"));
        }
        for row in &theta {
            check_theta(row, p)?;
        }
        for t in &corr {
            let unit_diag = (0..t.nrows()).all(|r| (t[(r, r)] - 1.0).abs() <= 1e-12);
            if !t.is_square() || !unit_diag || t.clone().cholesky().is_none() {
                return Err(Error::invalid(
                    "level correlation matrix must be positive definite with unit diagonal",
                ));
            }
        }
        Ok(Self { sigma2, theta, corr })
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn correlations(&self) -> &[DMatrix<f64>] {
        &self.corr
    }

    pub fn p(&self) -> usize {
        self.theta[0].len()
    }

    pub fn q(&self) -> usize {
        self.sigma2.len()
    }

    /// Prior variance `sum_j sigma_j^2`.
    pub fn total_variance(&self) -> f64 {
        self.sigma2.iter().sum()
    }

    fn check_point(&self, w: &MixedPoint) -> Result<()> {
        if w.x.len() != self.p() || w.z.len() != self.q() {
            return Err(Error::invalid("point dimensions do not match the kernel"));
        }
        for (j, &level) in w.z.iter().enumerate() {
            if level < 1 || level > self.corr[j].nrows() {
                return Err(Error::invalid(format!(
                    "level {level} out of range for qualitative factor {}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// Covariance without dimension checks; callers validate up front.
    pub(crate) fn cov_unchecked(&self, w1: &MixedPoint, w2: &MixedPoint) -> f64 {
        let mut total = 0.0;
        for j in 0..self.sigma2.len() {
            let tau = self.corr[j][(w1.z[j] - 1, w2.z[j] - 1)];
            if tau == 0.0 {
                continue;
            }
            let d2: f64 = self.theta[j]
                .iter()
                .zip(w1.x.iter().zip(&w2.x))
                .map(|(t, (a, b))| t * (a - b) * (a - b))
                .sum();
            total += self.sigma2[j] * tau * (-d2).exp();
        }
        total
    }
}

fn check_theta(theta_row: &[f64], p: usize) -> Result<()> {
    if theta_row.len() != p {
        return Err(Error::invalid(format!(
            "theta row has length {}, expected {p}",
            theta_row.len()
        )));
    }
    if theta_row.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("theta entries must be positive and finite"));
    }
    Ok(())
}

/// Gaussian correlation `exp(-sum theta_i (x1_i - x2_i)^2)`.
pub fn gauss_corr(x1: &[f64], x2: &[f64], theta_row: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::invalid("gauss_corr: point dimensions differ"));
    }
    check_theta(theta_row, x1.len())?;
    let d2: f64 = theta_row
        .iter()
        .zip(x1.iter().zip(x2))
        .map(|(t, (a, b))| t * (a - b) * (a - b))
        .sum();
    Ok((-d2).exp())
}

/// Lower-triangular factor `L` of the hypersphere parameterization.
///
/// Angles are consumed row by row: row `r` (0-based, `r >= 1`) takes the
/// next `r` angles. Every row of `L` has unit Euclidean norm.
pub fn hypersphere_factor(angles: &[f64], m: usize) -> Result<DMatrix<f64>> {
    if m == 0 || angles.len() != m * (m - 1) / 2 {
        return Err(Error::invalid(format!(
            "{} angle(s) given; a {m}-level factor needs {}",
            angles.len(),
            m * m.saturating_sub(1) / 2
        )));
    }
    if let Some(a) = angles
        .iter()
        .find(|&&a| !(a > 0.0 && a < std::f64::consts::PI))
    {
        return Err(Error::invalid(format!("angle {a} outside the open interval (0, pi)")));
    }
    let mut l = DMatrix::zeros(m, m);
    l[(0, 0)] = 1.0;
    let mut offset = 0;
    for r in 1..m {
        let row = &angles[offset..offset + r];
        offset += r;
        let mut sin_prod = 1.0;
        for (s, &a) in row.iter().enumerate() {
            l[(r, s)] = sin_prod * a.cos();
            sin_prod *= a.sin();
        }
        l[(r, r)] = sin_prod;
    }
    Ok(l)
}

/// Unit-diagonal positive-definite correlation matrix `T = L L^T`.
pub fn hypersphere_to_corr(angles: &[f64], m: usize) -> Result<DMatrix<f64>> {
    let l = hypersphere_factor(angles, m)?;
    let mut t = &l * l.transpose();
    for r in 0..m {
        t[(r, r)] = 1.0;
    }
    Ok(t)
}

/// Additive cross-covariance between two unit-scale points.
pub fn cross_cov(w1: &MixedPoint, w2: &MixedPoint, kernel: &AdditiveKernel) -> Result<f64> {
    kernel.check_point(w1)?;
    kernel.check_point(w2)?;
    Ok(kernel.cov_unchecked(w1, w2))
}

/// Covariance matrix of `points` with `jitter` added to the diagonal.
pub fn cov_matrix(points: &[MixedPoint], kernel: &AdditiveKernel, jitter: f64) -> Result<DMatrix<f64>> {
    for w in points {
        kernel.check_point(w)?;
    }
    Ok(cov_matrix_unchecked(points, kernel, jitter))
}

pub(crate) fn cov_matrix_unchecked(
    points: &[MixedPoint],
    kernel: &AdditiveKernel,
    jitter: f64,
) -> DMatrix<f64> {
    let n = points.len();
    let mut phi = DMatrix::zeros(n, n);
    for a in 0..n {
        phi[(a, a)] = kernel.total_variance() + jitter;
        for b in 0..a {
            let c = kernel.cov_unchecked(&points[a], &points[b]);
            phi[(a, b)] = c;
            phi[(b, a)] = c;
        }
    }
    phi
}
