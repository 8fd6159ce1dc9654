//! Test objectives with mixed inputs, evaluated in user units.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::{DomainSpec, MixedPoint, QualitativeSpace};

/// A documented minimum and where it comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMin {
    pub value: f64,
    pub argmin: MixedPoint,
    pub source: &'static str,
}

#[derive(Debug, Clone)]
pub struct BenchmarkFn {
    pub name: &'static str,
    pub domain: DomainSpec,
    evaluator: fn(&MixedPoint) -> f64,
    pub known_min: Option<KnownMin>,
    /// Minimum asserted in the literature but not verified here.
    pub claimed_min: Option<f64>,
    /// Default protocol: initial runs and sequential runs.
    pub default_budget: (usize, usize),
}

impl BenchmarkFn {
    pub const NAMES: [&'static str; 3] = ["example1", "example2", "example3"];

    pub fn by_name(name: &str) -> Result<Self> {
        let f = match name {
            "example1" => example1_fn(),
            "example2" => example2_fn(),
            "example3" => example3_fn(),
            other => {
                return Err(Error::invalid(format!(
                    "unknown benchmark {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        f.check_known_min()?;
        Ok(f)
    }

    fn check_known_min(&self) -> Result<()> {
        if let Some(k) = &self.known_min {
            let v = self.evaluate(&k.argmin)?;
            if (v - k.value).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "{}: recorded minimum {} but the evaluator gives {v} at its argmin",
                    self.name, k.value
                )));
            }
        }
        Ok(())
    }

    /// Evaluates a user-unit point after checking it against the domain.
    pub fn evaluate(&self, w: &MixedPoint) -> Result<f64> {
        self.domain.validate_user_point(w)?;
        Ok((self.evaluator)(w))
    }

    /// Evaluates without validation; callers guarantee conformity.
    pub fn evaluate_unchecked(&self, w: &MixedPoint) -> f64 {
        (self.evaluator)(w)
    }
}

fn example1_fn() -> BenchmarkFn {
    BenchmarkFn {
        name: "example1",
        domain: DomainSpec::new(vec![(0.0, 1.0)], QualitativeSpace::new(vec![3]).unwrap()).unwrap(),
        evaluator: example1,
        known_min: Some(KnownMin {
            value: -1.0,
            argmin: MixedPoint::new(vec![0.5], vec![3]),
            source: "published",
        }),
        claimed_min: None,
        default_budget: (3, 6),
    }
}

fn example2_fn() -> BenchmarkFn {
    BenchmarkFn {
        name: "example2",
        domain: DomainSpec::new(vec![(-100.0, 100.0); 3], QualitativeSpace::new(vec![3, 3, 3]).unwrap()).unwrap(),
        evaluator: example2,
        known_min: None,
        claimed_min: Some(3.75),
        default_budget: (9, 9),
    }
}

fn example3_fn() -> BenchmarkFn {
    BenchmarkFn {
        name: "example3",
        domain: DomainSpec::new(vec![(0.0, 1.0); 3], QualitativeSpace::new(vec![3, 3, 3]).unwrap()).unwrap(),
        evaluator: example3,
        known_min: None,
        claimed_min: None,
        default_budget: (9, 6),
    }
}

/// One continuous input on `[0, 1]`, one three-level factor.
pub fn example1(w: &MixedPoint) -> f64 {
    let x = w.x[0];
    match w.z[0] {
        1 => 2.0 + (6.0 * PI * x).cos(),
        2 => 1.0 - (4.0 * PI * x).cos(),
        3 => (2.0 * PI * x).cos(),
        z => panic!("example1 has levels 1..=3, got {z}"),
    }
}

/// Numeric value of a level of the second example's factors.
pub fn example2_level_value(level: usize) -> f64 {
    match level {
        1 => -50.0,
        2 => 0.0,
        3 => 50.0,
        z => panic!("example2 has levels 1..=3, got {z}"),
    }
}

/// Three inputs on `[-100, 100]`; input `i` pairs with factor `4 - i`.
pub fn example2(w: &MixedPoint) -> f64 {
    let mut linear = 0.0;
    let mut product = 1.0;
    for (i, &x) in w.x.iter().enumerate() {
        let z = example2_level_value(w.z[2 - i]);
        let root = ((i + 1) as f64).sqrt();
        linear += x * z / 4000.0;
        product *= (x / root).cos() * (z / root).sin();
    }
    linear + product
}

/// Three inputs on `[0, 1]`; the factors pick the `f`, `g`, `h` components.
pub fn example3(w: &MixedPoint) -> f64 {
    let [x1, x2, x3] = [w.x[0], w.x[1], w.x[2]];
    let f = match w.z[0] {
        1 => x1 + x2 * x2 + x3.powi(3),
        2 => x1 * x1 + x2 + x3.powi(3),
        3 => x1.powi(3) + x2 * x2 + x3,
        z => panic!("example3 has levels 1..=3, got {z}"),
    };
    let g = match w.z[1] {
        1 => x1.cos() + (2.0 * x2).cos() + (3.0 * x3).cos(),
        2 => (3.0 * x1).cos() + (2.0 * x2).cos() + x3.cos(),
        3 => (2.0 * x1).cos() + x2.cos() + (3.0 * x3).cos(),
        z => panic!("example3 has levels 1..=3, got {z}"),
    };
    let h = match w.z[2] {
        1 => x1.sin() + (2.0 * x2).sin() + (3.0 * x3).sin(),
        2 => (3.0 * x1).sin() + (2.0 * x2).sin() + x3.sin(),
        3 => (2.0 * x1).sin() + x2.sin() + (3.0 * x3).sin(),
        z => panic!("example3 has levels 1..=3, got {z}"),
    };
    f * (g + h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: &[f64], z: &[usize]) -> MixedPoint {
        MixedPoint::new(x.to_vec(), z.to_vec())
    }

    #[test]
    fn example1_values() {
        assert_eq!(example1(&w(&[0.5], &[3])), -1.0);
        assert_eq!(example1(&w(&[0.0], &[1])), 3.0);
        assert_eq!(example1(&w(&[0.0], &[2])), 0.0);
    }

    #[test]
    fn example2_values() {
        for x in [[0.0, 0.0, 0.0], [13.0, -77.0, 99.0]] {
            assert_eq!(example2(&w(&x, &[2, 2, 2])), 0.0);
        }
        let direct = 50f64.sin() * (50.0 / 2f64.sqrt()).sin() * (50.0 / 3f64.sqrt()).sin();
        assert!((example2(&w(&[0.0; 3], &[3, 3, 3])) - direct).abs() < 1e-15);
        // x1 pairs with the third factor: only it is nonzero here.
        let v = example2(&w(&[40.0, 0.0, 0.0], &[2, 2, 1]));
        assert!((v - 40.0 * -50.0 / 4000.0).abs() < 1e-15);
    }

    #[test]
    fn example3_values() {
        for z in [[1, 1, 1], [2, 3, 1], [3, 3, 3]] {
            assert_eq!(example3(&w(&[0.0; 3], &z)), 0.0);
        }
        let s: f64 = (1..=3).map(|k| (k as f64).cos() + (k as f64).sin()).sum();
        assert!((example3(&w(&[1.0; 3], &[1, 1, 1])) - 3.0 * s).abs() < 1e-14);
    }

    #[test]
    fn registry_checks_inputs() {
        let f = BenchmarkFn::by_name("example1").unwrap();
        assert!(f.evaluate(&w(&[1.5], &[1])).is_err());
        assert!(f.evaluate(&w(&[0.5], &[4])).is_err());
        assert!(BenchmarkFn::by_name("example9").is_err());
        for name in BenchmarkFn::NAMES {
            BenchmarkFn::by_name(name).unwrap();
        }
    }
}
