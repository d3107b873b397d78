//! Min-norm point in the convex hull of task gradients.
//!
//! Solves `min_{z ∈ S_k} ½‖Σ_i z_i·row_i‖²` by projected gradient descent in
//! the `k`-dimensional Gram space, certifying termination with the
//! Frank-Wolfe duality gap `zᵀGz − min_i (Gz)_i`. The returned direction
//! `d = Σ z_i·row_i` maximizes `min_i row_iᵀd − ½‖d‖²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jacobian::{mat_vec, TaskJacobian};
use crate::simplex::{project_simplex, SimplexWeights};
use crate::vecops::dot;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;
const POWER_ITERATIONS: usize = 20;

#[derive(Debug, Clone)]
pub struct MinNormSolution {
    pub weights: SimplexWeights,
    /// `Σ z_i·row_i`
    pub direction: Vec<f64>,
    /// `½‖d‖²` at the returned weights.
    pub objective: f64,
    /// Frank-Wolfe duality gap at the returned weights.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct MinNormOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MinNormOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Largest eigenvalue of a PSD Gram matrix, estimated by power iteration.
pub(crate) fn power_iteration(g: &[f64], k: usize) -> f64 {
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = mat_vec(g, k, &v);
        let n = dot(&w, &w).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w);
        v = w.into_iter().map(|x| x / n).collect();
    }
    // Rayleigh quotient at the final iterate.
    lambda.max(dot(&v, &mat_vec(g, k, &v)))
}

fn gap_at(z: &[f64], gz: &[f64]) -> f64 {
    let min = gz.iter().copied().fold(f64::INFINITY, f64::min);
    (dot(z, gz) - min).max(0.0)
}

/// Minimizes `½ zᵀGz` over the simplex for a row-major `k × k` PSD matrix.
/// Returns `(z, gap, iterations, converged)`.
pub fn solve_gram_qp(g: &[f64], k: usize, opts: MinNormOptions) -> Result<(SimplexWeights, f64, usize, bool)> {
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::InvalidInput(format!("tolerance must be > 0, got {}", opts.tol)));
    }
    if k == 1 {
        return Ok((SimplexWeights::uniform(1), 0.0, 0, true));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("gram matrix is not finite".into()));
    }
    let mut lip = power_iteration(g, k);
    let mut z = SimplexWeights::uniform(k);
    if lip <= 0.0 {
        return Ok((z, 0.0, 0, true));
    }
    let mut gz = mat_vec(g, k, &z);
    let mut f = 0.5 * dot(&z, &gz);
    let mut gap = gap_at(&z, &gz);
    let mut best = (gap, z.clone());
    let mut iters = 0;
    while iters < opts.max_iter {
        if gap <= opts.tol {
            break;
        }
        iters += 1;
        let y: Vec<f64> = z.iter().zip(&gz).map(|(zi, gi)| zi - gi / lip).collect();
        let z_new = project_simplex(&y)?;
        let gz_new = mat_vec(g, k, &z_new);
        let f_new = 0.5 * dot(&z_new, &gz_new);
        // Power iteration can underestimate the curvature; back off if the
        // step failed to decrease the objective.
        if f_new > f + 1e-15 * f.abs().max(1e-300) {
            lip *= 2.0;
            continue;
        }
        z = z_new;
        gz = gz_new;
        f = f_new;
        gap = gap_at(&z, &gz);
        if gap < best.0 {
            best = (gap, z.clone());
        }
    }
    if gap > best.0 {
        (z, gap) = (best.1, best.0);
    }
    if let Some((zp, gp)) = polish(g, k, &z) {
        if gp < gap {
            (z, gap) = (zp, gp);
        }
    }
    if gap > opts.tol {
        if let Some((zw, gw)) = wolfe(g, k, opts.tol) {
            if gw < gap {
                (z, gap) = (zw, gw);
            }
        }
    }
    Ok((z, gap, iters, gap <= opts.tol))
}

/// Affine minimizer of `½ αᵀG_SSα` subject to `Σα = 1`.
fn affine_min(g: &[f64], k: usize, support: &[usize]) -> Option<Vec<f64>> {
    let n = support.len();
    let a = DMatrix::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
        (true, true) => g[support[r] * k + support[c]],
        (false, false) => 0.0,
        _ => 1.0,
    });
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    // Least squares on a rank-deficient system only meets Σα = 1 roughly.
    let sum: f64 = sol.iter().take(n).sum();
    let alpha: Vec<f64> = sol.iter().take(n).map(|a| a / sum).collect();
    alpha.iter().all(|x| x.is_finite()).then_some(alpha)
}

/// Wolfe's min-norm-point method in Gram coordinates. Finite active-set
/// steps, so it settles ill-conditioned instances where projected gradient
/// stalls.
fn wolfe(g: &[f64], k: usize, tol: f64) -> Option<(SimplexWeights, f64)> {
    let start = (0..k).min_by(|&a, &b| g[a * k + a].total_cmp(&g[b * k + b]))?;
    let mut support = vec![start];
    let mut lambda = vec![1.0];
    let dense = |support: &[usize], lambda: &[f64]| {
        let mut z = vec![0.0; k];
        let s: f64 = lambda.iter().sum();
        for (&i, &l) in support.iter().zip(lambda) {
            z[i] = l / s;
        }
        z
    };
    for _ in 0..(50 * k + 100) {
        let z = dense(&support, &lambda);
        let gz = mat_vec(g, k, &z);
        let gap = gap_at(&z, &gz);
        let j = (0..k).min_by(|&a, &b| gz[a].total_cmp(&gz[b]))?;
        if gap <= tol || support.contains(&j) {
            return Some((SimplexWeights::from_normalized(z), gap));
        }
        support.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_min(g, k, &support)?;
            if alpha.iter().all(|&a| a > 1e-15) {
                lambda = alpha;
                break;
            }
            // Walk toward the affine minimizer until a weight hits zero.
            let theta = lambda
                .iter()
                .zip(&alpha)
                .filter(|(_, &a)| a <= 1e-15)
                .map(|(&l, &a)| if l - a > 0.0 { l / (l - a) } else { 0.0 })
                .fold(1.0f64, f64::min);
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let keep: Vec<bool> = lambda.iter().map(|&l| l > 1e-15).collect();
            support = support.iter().zip(&keep).filter(|(_, &k)| k).map(|(&i, _)| i).collect();
            lambda = lambda.iter().zip(&keep).filter(|(_, &k)| k).map(|(&l, _)| l).collect();
            let s: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= s);
            if support.len() <= 1 {
                break;
            }
        }
    }
    let z = dense(&support, &lambda);
    let gap = gap_at(&z, &mat_vec(g, k, &z));
    Some((SimplexWeights::from_normalized(z), gap))
}

/// Solves the equality-constrained problem on the support of `z` at a few
/// truncation levels and returns the feasible candidate with the smallest
/// duality gap. Projected gradient only approaches a face of the simplex
/// asymptotically; this lands on it exactly.
fn polish(g: &[f64], k: usize, z: &[f64]) -> Option<(SimplexWeights, f64)> {
    let zmax = z.iter().copied().fold(0.0, f64::max);
    let mut best: Option<(SimplexWeights, f64)> = None;
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for thresh in [0.0, 1e-9, 1e-6, 1e-3] {
        let support: Vec<usize> = (0..k).filter(|&i| z[i] > thresh * zmax).collect();
        if support.is_empty() || tried.contains(&support) {
            continue;
        }
        let n = support.len();
        // [G_SS 1; 1ᵀ 0] [z_S; -λ] = [0; 1]
        let a = DMatrix::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
            (true, true) => g[support[r] * k + support[c]],
            (false, false) => 0.0,
            _ => 1.0,
        });
        let mut b = DVector::zeros(n + 1);
        b[n] = 1.0;
        tried.push(support.clone());
        let Ok(sol) = a.svd(true, true).solve(&b, 1e-14) else { continue };
        if sol.iter().take(n).any(|&x| !(x >= -1e-15)) {
            continue;
        }
        let mut cand = vec![0.0; k];
        for (j, &i) in support.iter().enumerate() {
            cand[i] = sol[j].max(0.0);
        }
        let s: f64 = cand.iter().sum();
        if !(s > 0.0) {
            continue;
        }
        cand.iter_mut().for_each(|x| *x /= s);
        let gz = mat_vec(g, k, &cand);
        let gap = gap_at(&cand, &gz);
        if best.as_ref().is_none_or(|b| gap < b.1) {
            best = Some((SimplexWeights::from_normalized(cand), gap));
        }
    }
    best
}

/// Min-norm point of the convex hull of the Jacobian rows.
pub fn solve_min_norm_on_simplex(j: &TaskJacobian, opts: MinNormOptions) -> Result<MinNormSolution> {
    let k = j.num_tasks();
    if !j.is_finite() {
        return Err(Error::InvalidInput("jacobian is not finite".into()));
    }
    let g = j.gram();
    let (weights, gap, iterations, converged) = solve_gram_qp(&g, k, opts)?;
    let direction = j.combine(&weights)?;
    let objective = 0.5 * dot(&direction, &direction);
    Ok(MinNormSolution { weights, direction, objective, gap, iterations, converged })
}
