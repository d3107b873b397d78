//! Cheap weightings that need a single weighted gradient per step.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::jacobian::TaskJacobian;
use crate::simplex::{softmax, SimplexWeights};

/// Mean of the task gradients.
pub fn ls_direction(jac: &TaskJacobian) -> Vec<f64> {
    let k = jac.num_tasks();
    jac.combine(&vec![1.0 / k as f64; k]).expect("k weights")
}

/// `Σ_i row_i/ℓ_i`, the gradient of `Σ_i log ℓ_i`.
pub fn si_direction(shifted: &[f64], jac: &TaskJacobian) -> Result<Vec<f64>> {
    jac.combine(&si_weights(shifted)?)
}

pub fn si_weights(shifted: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = shifted.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Precondition(format!("shifted loss {i} is {} (must be > 0)", shifted[i])));
    }
    Ok(shifted.iter().map(|l| 1.0 / l).collect())
}

/// `softmax(ν)` with `ν ~ N(0, I)`.
pub fn rlw_weights<R: Rng + ?Sized>(rng: &mut R, k: usize) -> SimplexWeights {
    let nu: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    softmax(&nu).expect("finite normal draws")
}
