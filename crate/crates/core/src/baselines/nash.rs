//! Bargaining weights: the positive solution of `Mw = 1⊘w` with `M = GGᵀ`
//! the task-gradient Gram matrix. It is the minimizer of the strictly convex
//! `φ(w) = ½wᵀMw − Σ log w_i`, found by damped Newton steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jacobian::{mat_vec, TaskJacobian};
use crate::vecops::{dot, norm};

pub const WEIGHT_FLOOR: f64 = 1e-6;
const DIVERGED: f64 = 1e12;

#[derive(Debug, Clone, Copy)]
pub struct NashOptions {
    /// Target for `‖Mw − 1⊘w‖` relative to `‖M‖_F‖w‖ + ‖1⊘w‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NashOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct NashSolution {
    /// Positive, not normalized.
    pub weights: Vec<f64>,
    pub direction: Vec<f64>,
    /// `‖Mw − 1⊘w‖`
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `r = Mw − 1⊘w`
pub fn nash_residual(gram: &[f64], k: usize, w: &[f64]) -> Vec<f64> {
    mat_vec(gram, k, w).iter().zip(w).map(|(a, wi)| a - 1.0 / wi).collect()
}

/// `∂F/∂w = 2Mr + 2r⊘(w⊙w)` for `F(w) = ‖r‖²`, given `Mr`.
pub fn nash_gradient(mr: &[f64], r: &[f64], w: &[f64]) -> Vec<f64> {
    (0..w.len()).map(|i| 2.0 * mr[i] + 2.0 * r[i] / (w[i] * w[i])).collect()
}

fn phi(gram: &[f64], k: usize, w: &[f64]) -> f64 {
    0.5 * dot(w, &mat_vec(gram, k, w)) - w.iter().map(|x| x.ln()).sum::<f64>()
}

/// `‖r‖` over the size of the terms it cancels, `‖M‖_F‖w‖ + ‖1⊘w‖`, so the
/// test stays reachable in floating point when `M` is ill-conditioned.
fn relative(gram: &[f64], r: &[f64], w: &[f64]) -> f64 {
    let inv = w.iter().map(|x| x.powi(-2)).sum::<f64>().sqrt();
    norm(r) / (norm(gram) * norm(w) + inv)
}

/// Newton on `φ` from `w = 1`. The step is cut to stay inside `w > 0` and
/// backtracked until `φ` decreases. A Gram matrix with a positive null
/// vector has no solution; the weights then grow without bound and the
/// solve stops unconverged once they pass `DIVERGED`.
pub fn solve_nash_weights(gram: &[f64], k: usize, opts: NashOptions) -> (Vec<f64>, f64, usize, bool) {
    let mut w = vec![1.0; k];
    let mut r = nash_residual(gram, k, &w);
    let mut iters = 0;
    while iters < opts.max_iter && relative(gram, &r, &w) > opts.tol && w.iter().all(|x| *x < DIVERGED) {
        iters += 1;
        let h = DMatrix::from_fn(k, k, |i, j| gram[i * k + j] + if i == j { w[i].powi(-2) } else { 0.0 });
        let rhs = -DVector::from_column_slice(&r);
        let Some(p) = h.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| h.lu().solve(&rhs)) else { break };
        let mut t = p.iter().zip(&w).filter(|(pi, _)| **pi < 0.0).map(|(pi, wi)| -0.99 * wi / pi).fold(1.0, f64::min);
        let f0 = phi(gram, k, &w);
        let slope = dot(&r, p.as_slice());
        let mut next = None;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(p.iter()).map(|(wi, pi)| wi + t * pi).collect();
            if phi(gram, k, &cand) <= f0 + 1e-4 * t * slope {
                next = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = next else { break };
        w = cand;
        r = nash_residual(gram, k, &w);
    }
    for wi in &mut w {
        *wi = wi.max(WEIGHT_FLOOR);
    }
    let residual = norm(&r);
    (w.clone(), residual, iters, relative(gram, &r, &w) <= opts.tol)
}

pub fn nashmtl_direction(jac: &TaskJacobian, opts: NashOptions) -> Result<NashSolution> {
    let k = jac.num_tasks();
    let gram = jac.gram();
    if let Some(i) = (0..k).position(|i| gram[i * k + i] == 0.0) {
        return Err(Error::InvalidInput(format!("task {i} has a zero gradient")));
    }
    let (weights, residual, iterations, converged) = solve_nash_weights(&gram, k, opts);
    if !converged {
        log::debug!("NashMTL: residual {residual:e} after {iterations} iterations");
    }
    let direction = jac.combine(&weights)?;
    Ok(NashSolution { weights, direction, residual, iterations, converged })
}
