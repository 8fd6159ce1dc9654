//! Box-constrained limited-memory BFGS with projected backtracking steps.
//!
//! Only what the likelihood fit needs: a smooth objective with an analytic
//! gradient on a handful to a few dozen variables. Infeasible or failed
//! evaluations are reported as non-finite values and rejected by the line
//! search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct BoxLbfgs {
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    pub tolerance: f64,
    pub memory: usize,
}

impl Default for BoxLbfgs {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tolerance: 1e-6,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Zeroes gradient components pinned at a bound and pointing outward.
fn free_mask(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&v, &gv), (&l, &h))| !((v <= l && gv > 0.0) || (v >= h && gv < 0.0)))
        .collect()
}

impl BoxLbfgs {
    /// Minimizes `f` (returning value and gradient) over `[lo, hi]` from `x0`.
    ///
    /// Returns `None` when the starting point itself cannot be evaluated.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lo: &[f64], hi: &[f64]) -> Option<Minimum>
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        let n = x0.len();
        let mut x = x0.to_vec();
        project(&mut x, lo, hi);
        let (mut fx, mut g) = f(&x).filter(|(v, _)| v.is_finite())?;
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.max_iters {
            iterations += 1;
            let mask = free_mask(&x, &g, lo, hi);
            let pg: Vec<f64> = g
                .iter()
                .zip(&mask)
                .map(|(&v, &free)| if free { v } else { 0.0 })
                .collect();
            if pg.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10 {
                converged = true;
                break;
            }

            let mut d = two_loop(&pg, &history);
            for (v, &free) in d.iter_mut().zip(&mask) {
                if !free {
                    *v = 0.0;
                }
            }
            if dot(&d, &pg) >= 0.0 {
                history.clear();
                d = pg.iter().map(|v| -v).collect();
            }
            let mut step = if history.is_empty() {
                (1.0 / dot(&d, &d).sqrt()).min(1.0)
            } else {
                1.0
            };

            let mut accepted = None;
            for _ in 0..40 {
                let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                project(&mut trial, lo, hi);
                let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                if moved.iter().all(|v| *v == 0.0) {
                    break;
                }
                if let Some((ft, gt)) = f(&trial) {
                    if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &moved) {
                        accepted = Some((trial, ft, gt, moved));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((x_new, f_new, g_new, s)) = accepted else {
                // No acceptable step along the quasi-Newton direction.
                if history.is_empty() {
                    break;
                }
                history.clear();
                continue;
            };

            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                if history.len() == self.memory {
                    history.pop_front();
                }
                history.push_back((s, y, 1.0 / sy));
            }
            let change = (fx - f_new).abs();
            x = x_new;
            g = g_new;
            let previous = fx;
            fx = f_new;
            if change <= self.tolerance * previous.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        debug_assert_eq!(x.len(), n);
        Some(Minimum {
            x,
            value: fx,
            iterations,
            converged,
        })
    }
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qv, yv) in q.iter_mut().zip(y) {
            *qv -= a * yv;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qv, sv) in q.iter_mut().zip(s) {
            *qv += (a - b) * sv;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
