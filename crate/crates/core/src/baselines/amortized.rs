//! Loss-probe estimates of the CAGrad and NashMTL weight gradients.
//!
//! A gradient-to-gradient product `Gv = (g_iᵀv)_i` is estimated by one loss
//! evaluation: `ℓ(θ) − ℓ(θ − αv) ≈ α·Gv`. Each probe below costs two
//! weighted-gradient evaluations and three loss evaluations.

use crate::error::{check_len, Error, Result};
use crate::problems::MultiTaskProblem;
use crate::vecops::dot;

use super::nash::nash_gradient;

#[derive(Debug, Clone)]
pub struct ProbeEstimate {
    /// Estimated `∂F/∂w`; `None` when the estimate was rejected.
    pub gradient: Option<Vec<f64>>,
    pub rejection: Option<String>,
    /// Gradient evaluations spent, kept for reuse by the caller.
    pub g0: Vec<f64>,
    pub gw: Vec<f64>,
}

impl ProbeEstimate {
    fn rejected(reason: String, g0: Vec<f64>, gw: Vec<f64>) -> Self {
        log::debug!("probe rejected: {reason}");
        Self { gradient: None, rejection: Some(reason), g0, gw }
    }
}

fn check_probe(problem: &dyn MultiTaskProblem, theta: &[f64], w: &[f64], alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("probe step must be positive, got {alpha}")));
    }
    check_len(problem.dim(), theta.len())?;
    check_len(problem.num_tasks(), w.len())
}

/// `(ℓ(θ) − ℓ(θ − αv))/α`
fn probe(problem: &dyn MultiTaskProblem, base: &[f64], theta: &[f64], v: &[f64], alpha: f64) -> Vec<f64> {
    let moved: Vec<f64> = theta.iter().zip(v).map(|(t, vi)| t - alpha * vi).collect();
    problem.losses(&moved).iter().zip(base).map(|(l, b)| (b - l) / alpha).collect()
}

/// Estimates `∂F/∂w = Gg₀ + c(‖g₀‖/‖g_w‖)·Gg_w` with
/// `‖g₀‖² ≈ (1/k)·1ᵀGg₀` and `‖g_w‖² ≈ wᵀGg_w`.
pub fn amortized_cagrad_probe(
    problem: &dyn MultiTaskProblem,
    theta: &[f64],
    w: &[f64],
    c: f64,
    alpha: f64,
) -> Result<ProbeEstimate> {
    check_probe(problem, theta, w, alpha)?;
    let k = problem.num_tasks();
    let g0 = problem.weighted_gradient(theta, &vec![1.0 / k as f64; k]);
    let gw = problem.weighted_gradient(theta, w);
    let base = problem.losses(theta);
    let a = probe(problem, &base, theta, &g0, alpha);
    let b = probe(problem, &base, theta, &gw, alpha);
    let g0_sq = a.iter().sum::<f64>() / k as f64;
    let gw_sq = dot(w, &b);
    if !(g0_sq >= 0.0) || !(gw_sq > 0.0) {
        let reason = format!("norm estimates not positive (‖g₀‖² ≈ {g0_sq:e}, ‖g_w‖² ≈ {gw_sq:e})");
        return Ok(ProbeEstimate::rejected(reason, g0, gw));
    }
    let ratio = c * (g0_sq / gw_sq).sqrt();
    let gradient = a.iter().zip(&b).map(|(ai, bi)| ai + ratio * bi).collect();
    Ok(ProbeEstimate { gradient: Some(gradient), rejection: None, g0, gw })
}

/// Estimates `∂F/∂w = 2Mr + 2r⊘(w⊙w)`, `r = η − 1⊘w`, from `η ≈ Gg_w` and
/// a second probe along `Σ r_i·g_i` for `Mr`.
pub fn amortized_nashmtl_probe(
    problem: &dyn MultiTaskProblem,
    theta: &[f64],
    w: &[f64],
    alpha: f64,
) -> Result<ProbeEstimate> {
    check_probe(problem, theta, w, alpha)?;
    if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput(format!("NashMTL weight {i} must be positive")));
    }
    let gw = problem.weighted_gradient(theta, w);
    let base = problem.losses(theta);
    let eta = probe(problem, &base, theta, &gw, alpha);
    let r: Vec<f64> = eta.iter().zip(w).map(|(e, wi)| e - 1.0 / wi).collect();
    let gr = problem.weighted_gradient(theta, &r);
    let mr = probe(problem, &base, theta, &gr, alpha);
    if mr.iter().chain(&eta).any(|x| !x.is_finite()) {
        return Ok(ProbeEstimate::rejected("non-finite probe".into(), gr, gw));
    }
    Ok(ProbeEstimate { gradient: Some(nash_gradient(&mr, &r, w)), rejection: None, g0: gr, gw })
}
