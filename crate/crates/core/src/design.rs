//! Initial designs and candidate pools.
//!
//! All continuous coordinates produced here are on the unit scale and all
//! level indices are 1-based.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DomainSpec, MixedPoint, QualitativeSpace};
use crate::model::Dataset;
use crate::rng::stream;

/// Keeps LHD draws strictly inside their strata so `ceil(n v)` recovers
/// the stratum index exactly.
const STRATUM_MARGIN: f64 = 1e-9;
/// Candidates closer than this to a training input with the same levels are dropped.
pub const DUPLICATE_TOL: f64 = 1e-6;
/// Observed inputs re-crossed with every level combination.
pub const BEST_SEEDS: usize = 3;
pub const DEFAULT_CANDIDATES_PER_COMBINATION: usize = 200;

/// Random Latin hypercube: `n` rows, `p` columns, one point per stratum per column.
pub fn random_lhd<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; p]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..p {
        perm.shuffle(rng);
        for (row, &stratum) in rows.iter_mut().zip(&perm) {
            let u = rng.gen_range(STRATUM_MARGIN..=1.0 - STRATUM_MARGIN);
            row[col] = (stratum as f64 + u) / n as f64;
        }
    }
    rows
}

/// Every level combination in lexicographic order (last factor fastest).
pub fn full_factorial(space: &QualitativeSpace) -> Vec<Vec<usize>> {
    let q = space.q();
    let mut rows = Vec::with_capacity(space.combinations());
    let mut current = vec![1; q];
    loop {
        rows.push(current.clone());
        let mut j = q;
        loop {
            if j == 0 {
                return rows;
            }
            j -= 1;
            if current[j] < space.levels(j) {
                current[j] += 1;
                break;
            }
            current[j] = 1;
        }
    }
}

/// Nine-run design for three three-level factors with `z3 = z1 + z2 (mod 3)`.
pub fn fractional_factorial_3level(space: &QualitativeSpace) -> Result<Vec<Vec<usize>>> {
    if space.level_counts() != [3, 3, 3] {
        return Err(Error::invalid(format!(
            "the nine-run fraction needs three 3-level factors, got levels {:?}",
            space.level_counts()
        )));
    }
    let mut rows = Vec::with_capacity(9);
    for a in 0..3 {
        for b in 0..3 {
            rows.push(vec![a + 1, b + 1, (a + b) % 3 + 1]);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QualitativePlan {
    FullFactorial,
    Fractional3Level,
    /// Levels drawn independently and uniformly for every run.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDesignSpec {
    pub n_runs: usize,
    pub plan: QualitativePlan,
    pub seed: u64,
}

impl InitialDesignSpec {
    /// Chooses the factorial that matches `n_runs` when there is one.
    pub fn auto(n_runs: usize, space: &QualitativeSpace, seed: u64) -> Self {
        let plan = if n_runs == space.combinations() {
            QualitativePlan::FullFactorial
        } else if n_runs == 9 && space.level_counts() == [3, 3, 3] {
            QualitativePlan::Fractional3Level
        } else {
            QualitativePlan::Random
        };
        Self { n_runs, plan, seed }
    }

    pub fn validate(&self, space: &QualitativeSpace) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::invalid("initial design needs at least one run"));
        }
        match self.plan {
            QualitativePlan::FullFactorial if self.n_runs != space.combinations() => Err(Error::invalid(format!(
                "full factorial has {} runs, requested {}",
                space.combinations(),
                self.n_runs
            ))),
            QualitativePlan::Fractional3Level if self.n_runs != 9 => Err(Error::invalid(format!(
                "the three-level fraction has 9 runs, requested {}",
                self.n_runs
            ))),
            QualitativePlan::Fractional3Level => fractional_factorial_3level(space).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Uniformly drawn level vectors.
pub fn random_levels<R: Rng + ?Sized>(n: usize, space: &QualitativeSpace, rng: &mut R) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| (0..space.q()).map(|j| rng.gen_range(1..=space.levels(j))).collect())
        .collect()
}

/// Pairs row `t` of the qualitative plan with row `t` of a random LHD.
pub fn initial_design(spec: &InitialDesignSpec, domain: &DomainSpec) -> Result<Vec<MixedPoint>> {
    let space = domain.qualitative();
    spec.validate(space)?;
    let mut rng = stream(spec.seed, 0);
    let levels = match spec.plan {
        QualitativePlan::FullFactorial => full_factorial(space),
        QualitativePlan::Fractional3Level => fractional_factorial_3level(space)?,
        QualitativePlan::Random => random_levels(spec.n_runs, space, &mut rng),
    };
    let xs = random_lhd(spec.n_runs, domain.p(), &mut rng);
    Ok(xs.into_iter().zip(levels).map(|(x, z)| MixedPoint::new(x, z)).collect())
}

/// Finite search pool for the acquisition argmin.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub points: Vec<MixedPoint>,
    pub per_combination: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// For every level combination: a fresh `per_combination`-point LHD over
/// `x` plus the best observed `x` locations, minus near-duplicates of
/// training inputs.
pub fn candidate_pool<R: Rng + ?Sized>(data: &Dataset, per_combination: usize, rng: &mut R) -> Result<CandidateSet> {
    if per_combination == 0 {
        return Err(Error::invalid("candidate pool needs at least one point per combination"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.responses()[a].total_cmp(&data.responses()[b]));
    let seeds: Vec<&[f64]> = order
        .iter()
        .take(BEST_SEEDS)
        .map(|&i| data.points()[i].x.as_slice())
        .collect();

    let mut points = Vec::new();
    for z in full_factorial(data.space()) {
        let fresh = random_lhd(per_combination, data.p(), rng);
        let seeded = seeds.iter().map(|x| x.to_vec());
        for x in fresh.into_iter().chain(seeded) {
            let w = MixedPoint::new(x, z.clone());
            if !data.points().iter().any(|t| t.coincides(&w, DUPLICATE_TOL)) {
                points.push(w);
            }
        }
    }
    Ok(CandidateSet {
        points,
        per_combination,
    })
}

/// Coordinate-wise golden-section refinement of `x0` inside `[0, 1]^p`.
///
/// Each coordinate is searched on `x0_i +- radius`. `f` may return a
/// non-finite value to mark a point as inadmissible. Returns the best point
/// found and its value; `(x0, f0)` when nothing improves.
pub fn golden_polish<F>(x0: &[f64], f0: f64, radius: f64, max_evals: usize, mut f: F) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = (x0.to_vec(), f0);
    if x0.is_empty() || max_evals < 2 {
        return best;
    }
    let per_coord = (max_evals / x0.len()).max(2);
    let mut evals = 0;
    let mut eval = |x: &[f64], best: &mut (Vec<f64>, f64)| {
        let v = f(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if v < best.1 {
            *best = (x.to_vec(), v);
        }
        v
    };
    for i in 0..x0.len() {
        if evals + 2 > max_evals {
            break;
        }
        let centre = best.0.clone();
        let mut lo = (centre[i] - radius).max(0.0);
        let mut hi = (centre[i] + radius).min(1.0);
        let at = |v: f64| {
            let mut x = centre.clone();
            x[i] = v;
            x
        };
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let mut fc = eval(&at(c), &mut best);
        let mut fd = eval(&at(d), &mut best);
        let mut used = 2;
        evals += 2;
        while used < per_coord && evals < max_evals {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = eval(&at(c), &mut best);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = eval(&at(d), &mut best);
            }
            used += 1;
            evals += 1;
        }
    }
    best
}
