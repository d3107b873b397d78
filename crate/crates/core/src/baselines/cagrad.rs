//! Conflict-averse direction: the best worst-case improvement within a ball
//! of radius `c‖g₀‖` around the average gradient `g₀`.
//!
//! The weights minimize `F(w) = g_wᵀg₀ + c‖g₀‖‖g_w‖` over the simplex, with
//! `g_w = Σ w_i·row_i`, and the direction is `d = g₀ + (c‖g₀‖/‖g_w‖)·g_w`.

use crate::dual::power_iteration;
use crate::error::{Error, Result};
use crate::jacobian::{mat_vec, TaskJacobian};
use crate::simplex::{project_simplex, SimplexWeights};
use crate::vecops::{axpy, dot, norm};

use super::weighting::ls_direction;

pub const DEFAULT_C: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct CagradOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CagradOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct CagradSolution {
    /// Minimizer of `F` on the simplex.
    pub weights: SimplexWeights,
    /// Coefficients of `d` in the task gradients, `1/k + μ·w_i`.
    pub effective_weights: Vec<f64>,
    pub direction: Vec<f64>,
    /// `‖g_w‖` vanished, so `d` fell back to `g₀`.
    pub degenerate: bool,
    pub converged: bool,
}

/// `F(w)` and `∂F/∂w` from Gram-space quantities: `gg0 = G·1/k`, `g0n = ‖g₀‖`.
pub fn cagrad_objective(gram: &[f64], k: usize, gg0: &[f64], g0n: f64, c: f64, w: &[f64]) -> (f64, Vec<f64>) {
    let gw = mat_vec(gram, k, w);
    let gwn = dot(w, &gw).max(0.0).sqrt();
    let f = dot(w, gg0) + c * g0n * gwn;
    let grad = if gwn > 0.0 {
        gg0.iter().zip(&gw).map(|(a, b)| a + c * g0n / gwn * b).collect()
    } else {
        gg0.to_vec()
    };
    (f, grad)
}

pub fn cagrad_direction(jac: &TaskJacobian, c: f64, opts: CagradOptions) -> Result<CagradSolution> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("CAGrad radius must be ≥ 0, got {c}")));
    }
    let k = jac.num_tasks();
    let uniform = SimplexWeights::uniform(k);
    if c == 0.0 {
        return Ok(CagradSolution {
            effective_weights: uniform.to_vec(),
            weights: uniform,
            direction: ls_direction(jac),
            degenerate: false,
            converged: true,
        });
    }
    let gram = jac.gram();
    let gg0 = mat_vec(&gram, k, &uniform);
    let g0n = dot(&uniform, &gg0).max(0.0).sqrt();
    let (weights, converged) = minimize_on_simplex(&gram, k, &gg0, g0n, c, opts)?;
    let gw_vec = jac.combine(&weights)?;
    let gwn = norm(&gw_vec);
    let mut direction = ls_direction(jac);
    let mut effective_weights = uniform.to_vec();
    let degenerate = gwn <= f64::EPSILON * g0n.max(f64::MIN_POSITIVE);
    if degenerate {
        log::warn!("CAGrad: ‖g_w‖ vanished, falling back to the average gradient");
    } else {
        let mu = c * g0n / gwn;
        axpy(mu, &gw_vec, &mut direction);
        effective_weights.iter_mut().zip(weights.iter()).for_each(|(e, w)| *e += mu * w);
    }
    Ok(CagradSolution { weights, effective_weights, direction, degenerate, converged })
}

/// Projected gradient with sufficient-decrease backtracking.
fn minimize_on_simplex(
    gram: &[f64],
    k: usize,
    gg0: &[f64],
    g0n: f64,
    c: f64,
    opts: CagradOptions,
) -> Result<(SimplexWeights, bool)> {
    let mut w = SimplexWeights::uniform(k);
    let lip = power_iteration(gram, k);
    if lip <= 0.0 || k == 1 {
        return Ok((w, true));
    }
    let mut eta = 1.0 / (lip * (1.0 + c));
    let (mut f, mut grad) = cagrad_objective(gram, k, gg0, g0n, c, &w);
    for _ in 0..opts.max_iter {
        let mut accepted = None;
        for _ in 0..60 {
            let y: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - eta * gi).collect();
            let cand = project_simplex(&y)?;
            let (fc, gc) = cagrad_objective(gram, k, gg0, g0n, c, &cand);
            let step: Vec<f64> = cand.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
            let model = f + dot(&grad, &step) + dot(&step, &step) / (2.0 * eta);
            if fc <= model + 1e-15 * f.abs() {
                accepted = Some((cand, fc, gc, step));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, fc, gc, step)) = accepted else { break };
        let moved = step.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        w = cand;
        f = fc;
        grad = gc;
        if moved <= opts.tol {
            return Ok((w, true));
        }
        eta *= 1.5;
    }
    Ok((w, false))
}
