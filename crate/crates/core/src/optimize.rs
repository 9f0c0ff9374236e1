//! Box-constrained Nelder–Mead simplex minimizer.
//!
//! Vertices leaving the search box are reflected back across the violated
//! face, so the objective is only ever evaluated inside the box.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub max_iter: usize,
    /// Relative simplex-size tolerance.
    pub xtol_rel: f64,
    /// Relative tolerance on the spread of objective values.
    pub ftol_rel: f64,
    /// Absolute floor for the objective spread, for objectives that reach zero.
    pub ftol_abs: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            xtol_rel: 1e-10,
            ftol_rel: 1e-10,
            ftol_abs: 1e-24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Reflects `x` into `[lo, hi]`.
pub fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    if !x.is_finite() {
        return if x > hi { hi } else { lo };
    }
    let mut y = x;
    if y < lo {
        y = lo + (lo - y);
    }
    if y > hi {
        y = hi - (y - hi);
    }
    y.clamp(lo, hi)
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

impl NelderMeadConfig {
    /// Minimizes `f` from `x0` with initial simplex edge lengths `steps`.
    ///
    /// Non-finite objective values are treated as `+inf`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64], bounds: &[(f64, f64)]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let dim = x0.len();
        assert!(dim >= 1 && steps.len() == dim && bounds.len() == dim);
        let mut evaluations = 0usize;
        let mut eval = |x: &[f64], evaluations: &mut usize| {
            *evaluations += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let project = |x: &mut [f64]| {
            for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
                *xi = reflect_into(*xi, lo, hi);
            }
        };

        let mut start = x0.to_vec();
        project(&mut start);
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        simplex.push(start.clone());
        for i in 0..dim {
            let mut v = start.clone();
            let (lo, hi) = bounds[i];
            // step away from the nearer wall
            v[i] = if start[i] + steps[i] <= hi {
                start[i] + steps[i]
            } else {
                start[i] - steps[i]
            };
            v[i] = v[i].clamp(lo, hi);
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evaluations)).collect();

        let mut order: Vec<usize> = (0..=dim).collect();
        let mut centroid = vec![0.0; dim];
        let mut trial = vec![0.0; dim];
        let mut trial2 = vec![0.0; dim];
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.max_iter {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let best = order[0];
            let worst = order[dim];
            let second_worst = order[dim - 1];

            if self.has_converged(&simplex, &values, best) {
                converged = true;
                break;
            }
            iterations += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for &k in order.iter().take(dim) {
                for (c, x) in centroid.iter_mut().zip(&simplex[k]) {
                    *c += x / dim as f64;
                }
            }

            for j in 0..dim {
                trial[j] = centroid[j] + ALPHA * (centroid[j] - simplex[worst][j]);
            }
            project(&mut trial);
            let f_reflect = eval(&trial, &mut evaluations);

            if f_reflect < values[best] {
                for j in 0..dim {
                    trial2[j] = centroid[j] + GAMMA * (trial[j] - centroid[j]);
                }
                project(&mut trial2);
                let f_expand = eval(&trial2, &mut evaluations);
                if f_expand < f_reflect {
                    simplex[worst].copy_from_slice(&trial2);
                    values[worst] = f_expand;
                } else {
                    simplex[worst].copy_from_slice(&trial);
                    values[worst] = f_reflect;
                }
                continue;
            }
            if f_reflect < values[second_worst] {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_reflect;
                continue;
            }

            // contraction, outside if the reflection improved on the worst vertex
            let outside = f_reflect < values[worst];
            for j in 0..dim {
                trial2[j] = if outside {
                    centroid[j] + RHO * (trial[j] - centroid[j])
                } else {
                    centroid[j] + RHO * (simplex[worst][j] - centroid[j])
                };
            }
            project(&mut trial2);
            let f_contract = eval(&trial2, &mut evaluations);
            let threshold = if outside { f_reflect } else { values[worst] };
            if f_contract < threshold {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = f_contract;
                continue;
            }

            // shrink towards the best vertex
            let anchor = simplex[best].clone();
            for k in 0..=dim {
                if k == best {
                    continue;
                }
                for j in 0..dim {
                    simplex[k][j] = anchor[j] + SIGMA * (simplex[k][j] - anchor[j]);
                }
                values[k] = eval(&simplex[k], &mut evaluations);
            }
        }

        let best = (0..=dim)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap_or(0);
        Minimum {
            x: simplex[best].clone(),
            fx: values[best],
            iterations,
            evaluations,
            converged,
        }
    }

    fn has_converged(&self, simplex: &[Vec<f64>], values: &[f64], best: usize) -> bool {
        let fb = values[best];
        if !fb.is_finite() {
            return false;
        }
        let f_spread = values.iter().map(|v| (v - fb).abs()).fold(0.0, f64::max);
        if !(f_spread <= self.ftol_rel * fb.abs() + self.ftol_abs) {
            return false;
        }
        let xb = &simplex[best];
        simplex.iter().all(|v| {
            v.iter()
                .zip(xb)
                .all(|(a, b)| (a - b).abs() <= self.xtol_rel * b.abs().max(1.0))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let cfg = NelderMeadConfig {
            max_iter: 5000,
            ..Default::default()
        };
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = cfg.minimize(f, &[-1.2, 1.0], &[0.5, 0.5], &[(-5.0, 5.0), (-5.0, 5.0)]);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn optimum_outside_box_lands_on_face() {
        let cfg = NelderMeadConfig::default();
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let r = cfg.minimize(f, &[0.5, 0.5], &[0.2, 0.2], &[(0.0, 1.0), (0.0, 1.0)]);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!(r.x[1].abs() < 1e-6);
        for (x, (lo, hi)) in r.x.iter().zip([(0.0, 1.0), (0.0, 1.0)]) {
            assert!(*x >= lo && *x <= hi);
        }
    }

    #[test]
    fn one_dimensional() {
        let cfg = NelderMeadConfig::default();
        let r = cfg.minimize(|x| (x[0] - 0.3).powi(2) + 2.0, &[1.0], &[0.1], &[(0.0, 2.0)]);
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn reflection() {
        assert_eq!(reflect_into(-0.5, 0.0, 2.0), 0.5);
        assert_eq!(reflect_into(2.5, 0.0, 2.0), 1.5);
        assert_eq!(reflect_into(7.0, 0.0, 2.0), 0.0);
        assert_eq!(reflect_into(1.0, 0.0, 2.0), 1.0);
    }

    #[test]
    fn nan_objective_is_avoided() {
        let cfg = NelderMeadConfig::default();
        let f = |x: &[f64]| if x[0] < 0.2 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let r = cfg.minimize(f, &[1.0], &[0.3], &[(0.0, 2.0)]);
        assert!((r.x[0] - 0.5).abs() < 1e-6);
    }
}
