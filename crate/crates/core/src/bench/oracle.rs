//! Exhaustive grid search over every level combination.

use rayon::prelude::*;
use serde::Serialize;

use super::functions::BenchmarkFn;
use crate::design::{full_factorial, golden_polish};
use crate::error::{Error, Result};
use crate::kernel::MixedPoint;

pub const DEFAULT_MAX_EVALS: u64 = 10_000_000;
const POLISH_PASSES: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub function: String,
    pub value: f64,
    /// User units.
    pub argmin: MixedPoint,
    /// Best value on the grid before polishing.
    pub grid_value: f64,
    pub grid_points_per_axis: usize,
    pub evaluations: u64,
}

/// Grid points per axis for a unit-scale `step` (the grid includes both ends).
pub fn points_per_axis(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("grid step must lie in (0, 1], got {step}")));
    }
    Ok((1.0 / step).ceil() as usize + 1)
}

fn grid_size(f: &BenchmarkFn, k: usize) -> u64 {
    let combos = f.domain.qualitative().combinations() as u64;
    (k as u64).saturating_pow(f.domain.p() as u32).saturating_mul(combos)
}

/// Minimum over all level combinations crossed with a uniform grid of unit
/// step `step` in `x`, refined by a local golden-section search from the
/// best grid point. Refuses grids larger than `max_evals`.
pub fn brute_force_min(f: &BenchmarkFn, step: f64, max_evals: u64) -> Result<OracleResult> {
    let k = points_per_axis(step)?;
    let total = grid_size(f, k);
    if total > max_evals {
        let mut coarsest = k;
        while coarsest > 2 && grid_size(f, coarsest) > max_evals {
            coarsest -= 1;
        }
        return Err(Error::invalid(format!(
            "grid step {step} needs {total} evaluations (limit {max_evals}); the finest admissible step is {:.3e}",
            1.0 / (coarsest - 1) as f64
        )));
    }
    let p = f.domain.p();
    let axis: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let combos = full_factorial(f.domain.qualitative());
    let cells = (k as u64).pow(p as u32);

    let point = |z: &[usize], unit: &[f64]| MixedPoint::new(f.domain.from_unit(unit), z.to_vec());
    let per_combo: Vec<(f64, Vec<f64>)> = combos
        .par_iter()
        .map(|z| {
            let mut best = (f64::INFINITY, vec![0.0; p]);
            let mut unit = vec![0.0; p];
            for cell in 0..cells {
                let mut c = cell;
                for v in unit.iter_mut().rev() {
                    *v = axis[(c % k as u64) as usize];
                    c /= k as u64;
                }
                let y = f.evaluate_unchecked(&point(z, &unit));
                if y < best.0 {
                    best = (y, unit.clone());
                }
            }
            best
        })
        .collect();
    let (idx, (grid_value, grid_x)) = per_combo
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, Vec<f64>))>, (i, b)| match acc {
            Some((_, a)) if a.0 <= b.0 => acc,
            _ => Some((i, b)),
        })
        .ok_or_else(|| Error::invalid("benchmark has no level combinations"))?;
    let z = &combos[idx];

    let mut x = grid_x.clone();
    let mut value = *grid_value;
    let mut radius = 1.0 / (k - 1) as f64;
    let mut evaluations = total;
    for _ in 0..POLISH_PASSES {
        let mut counter = 0u64;
        let (nx, nv) = golden_polish(&x, value, radius, 30 * p, |u| {
            counter += 1;
            f.evaluate_unchecked(&point(z, u))
        });
        evaluations += counter;
        x = nx;
        value = nv;
        radius *= 0.5;
    }
    Ok(OracleResult {
        function: f.name.to_string(),
        value,
        argmin: point(z, &x),
        grid_value: *grid_value,
        grid_points_per_axis: k,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_oracle_hits_the_published_minimum() {
        let f = BenchmarkFn::by_name("example1").unwrap();
        let r = brute_force_min(&f, 1e-3, DEFAULT_MAX_EVALS).unwrap();
        assert!((r.value + 1.0).abs() < 1e-5);
        assert_eq!(r.argmin.z, vec![3]);
        assert!((r.argmin.x[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn oversized_grid_is_refused() {
        let f = BenchmarkFn::by_name("example2").unwrap();
        let err = brute_force_min(&f, 1e-3, DEFAULT_MAX_EVALS).unwrap_err();
        assert!(err.to_string().contains("finest admissible step"));
        assert!(points_per_axis(0.0).is_err());
    }
}
