//! Derivative-free Nelder–Mead minimization with a fixed evaluation budget.

use serde::{Deserialize, Serialize};

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Maximum number of objective evaluations across both runs.
    pub budget: usize,
    /// Converged once every vertex lies within this distance of the best.
    pub tolerance: f64,
    /// Offset along each axis for the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { budget: 2000, tolerance: 1e-6, initial_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct Budgeted<F> {
    f: F,
    used: usize,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> f64> Budgeted<F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.used >= self.budget {
            return None;
        }
        self.used += 1;
        let v = (self.f)(x);
        Some(if v.is_finite() { v } else { f64::INFINITY })
    }
}

/// Minimizes `f` from `x0`. When the first run converges the simplex is
/// rebuilt around its best vertex and the search runs once more.
pub fn minimize(f: impl FnMut(&[f64]) -> f64, x0: &[f64], options: &NelderMeadOptions) -> NelderMeadResult {
    let mut obj = Budgeted { f, used: 0, budget: options.budget };
    let Some(v0) = obj.eval(x0) else {
        return NelderMeadResult { x: x0.to_vec(), value: f64::NAN, evaluations: 0, converged: false };
    };
    let (x, value, converged) = run(&mut obj, x0.to_vec(), v0, options);
    let (x, value, converged) = if converged {
        run(&mut obj, x, value, options)
    } else {
        (x, value, false)
    };
    NelderMeadResult { x, value, evaluations: obj.used, converged }
}

fn run<F: FnMut(&[f64]) -> f64>(
    obj: &mut Budgeted<F>,
    start: Vec<f64>,
    start_value: f64,
    options: &NelderMeadOptions,
) -> (Vec<f64>, f64, bool) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), start_value)];
    for i in 0..dim {
        let mut x = start.clone();
        x[i] += options.initial_step;
        let Some(v) = obj.eval(&x) else {
            return best_of(simplex, false);
        };
        simplex.push((x, v));
    }
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| distance(x, &best))
            .fold(0.0, f64::max);
        if diameter < options.tolerance {
            return best_of(simplex, true);
        }
        let worst = simplex[dim].clone();
        let second_worst = simplex[dim - 1].1;
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let along = |coef: f64, to: &[f64]| -> Vec<f64> {
            centroid.iter().zip(to).map(|(c, t)| c + coef * (t - c)).collect()
        };
        let xr = along(-REFLECTION, &worst.0);
        let Some(fr) = obj.eval(&xr) else { return best_of(simplex, false) };
        if fr < simplex[0].1 {
            let xe = along(EXPANSION, &xr);
            let Some(fe) = obj.eval(&xe) else {
                simplex[dim] = (xr, fr);
                return best_of(simplex, false);
            };
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[dim] = (xr, fr);
            continue;
        }
        let outside = fr < worst.1;
        let xc = if outside { along(CONTRACTION, &xr) } else { along(CONTRACTION, &worst.0) };
        let Some(fc) = obj.eval(&xc) else { return best_of(simplex, false) };
        if (outside && fc <= fr) || (!outside && fc < worst.1) {
            simplex[dim] = (xc, fc);
            continue;
        }
        for k in 1..=dim {
            let x: Vec<f64> = best
                .iter()
                .zip(&simplex[k].0)
                .map(|(b, xi)| b + SHRINK * (xi - b))
                .collect();
            let Some(v) = obj.eval(&x) else { return best_of(simplex, false) };
            simplex[k] = (x, v);
        }
    }
}

fn best_of(mut simplex: Vec<(Vec<f64>, f64)>, converged: bool) -> (Vec<f64>, f64, bool) {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, v, converged)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
