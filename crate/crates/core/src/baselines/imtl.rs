//! Direction with equal projections onto every task's unit gradient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jacobian::TaskJacobian;

const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ImtlSolution {
    /// Sum to one; may be negative.
    pub weights: Vec<f64>,
    pub direction: Vec<f64>,
    /// The system was rank deficient and was solved in the least-squares sense.
    pub least_squares: bool,
}

/// Solves `dᵀu₁ = dᵀu_i (i ≥ 2)`, `Σ w = 1` for `d = Σ w_j·row_j`,
/// `u_i = row_i/‖row_i‖`.
pub fn imtlg_direction(jac: &TaskJacobian) -> Result<ImtlSolution> {
    let k = jac.num_tasks();
    let gram = jac.gram();
    let norms: Vec<f64> = (0..k).map(|i| gram[i * k + i].sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::InvalidInput(format!("task {i} has a zero gradient")));
    }
    // Row i−1: Σ_j w_j·row_jᵀ(u₁ − u_i) = 0; last row: Σ_j w_j = 1.
    let a = DMatrix::from_fn(k, k, |r, j| {
        if r + 1 < k {
            let i = r + 1;
            gram[j * k] / norms[0] - gram[j * k + i] / norms[i]
        } else {
            1.0
        }
    });
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let least_squares = smin <= RANK_TOL * smax;
    if least_squares {
        log::warn!("IMTL-G: singular system (σ_min/σ_max = {:e}), using least squares", smin / smax);
    }
    let sol = svd
        .solve(&b, RANK_TOL * smax)
        .map_err(|e| Error::Numerical(format!("IMTL-G solve failed: {e}")))?;
    let weights: Vec<f64> = sol.iter().copied().collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("IMTL-G produced non-finite weights".into()));
    }
    if weights.iter().any(|&w| w < 0.0) {
        log::debug!("IMTL-G weights leave the simplex: {weights:?}");
    }
    let direction = jac.combine(&weights)?;
    Ok(ImtlSolution { weights, direction, least_squares })
}
