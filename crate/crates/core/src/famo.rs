//! Fast adaptive multitask optimization.
//!
//! Each step takes one gradient of the weighted loss `Σ w_i·ℓ_i`, where
//! `w = c·z/ℓ` renormalizes the softmax weights `z = softmax(ξ)` of the
//! log-losses, and then nudges `ξ` using only the observed change in log
//! losses: `δ = Aᵀ(log ℓ_t − log ℓ_{t+1})`, `A` the softmax Jacobian.

use serde::{Deserialize, Serialize};

use crate::dual::{solve_min_norm_on_simplex, MinNormOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{check_len, Error, Result};
use crate::jacobian::TaskJacobian;
use crate::moment::{MomentUpdater, ParamUpdater};
use crate::optimizer::{Optimizer, StepInfo};
use crate::problems::{shift_losses, MultiTaskProblem};
use crate::simplex::{jvp_with_weights, Logits, SimplexWeights};
use crate::vecops::norm;

pub const DEFAULT_BETA: f64 = 0.025;
pub const DEFAULT_GAMMA: f64 = 0.001;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogitMode {
    /// `ξ ← ξ − β(δ + γξ)`
    PlainGd,
    /// Moment updater on `δ` with step `β` and weight decay `γ`.
    #[default]
    Moment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamoConfig {
    /// Logit step size.
    pub beta: f64,
    /// Logit decay.
    pub gamma: f64,
    /// Added to shifted losses to keep them positive.
    pub eps: f64,
    pub logit_mode: LogitMode,
    /// Dual solver tolerance for the exact-dual mode.
    pub dual_tol: f64,
    pub dual_max_iter: usize,
}

impl Default for FamoConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            eps: DEFAULT_EPS,
            logit_mode: LogitMode::Moment,
            dual_tol: DEFAULT_TOL,
            dual_max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl FamoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta.is_finite()
            && self.beta > 0.0
            && self.gamma.is_finite()
            && self.gamma >= 0.0
            && self.eps.is_finite()
            && self.eps > 0.0
            && self.dual_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid FAMO hyperparameters: {self:?}")))
        }
    }
}

/// `c = (Σ z_i/ℓ_i)⁻¹` and `w_i = c·z_i/ℓ_i`, the raw-loss weights whose
/// combination is a positive multiple of the log-loss combination.
pub fn renormalize(shifted: &[f64], z: &[f64]) -> Result<(SimplexWeights, f64)> {
    check_len(z.len(), shifted.len())?;
    if let Some(i) = shifted.iter().position(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::Precondition(format!("shifted loss {i} is {} (must be > 0)", shifted[i])));
    }
    let inv: f64 = z.iter().zip(shifted).map(|(zi, li)| zi / li).sum();
    let c = 1.0 / inv;
    let mut w: Vec<f64> = z.iter().zip(shifted).map(|(zi, li)| c * zi / li).collect();
    // Σw = 1 up to rounding; renormalize so the invariant holds to the bit.
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Ok((SimplexWeights::from_normalized(w), c))
}

/// Returns `(d, c, w)` with `d = Σ w_i·row_i`.
pub fn famo_weighted_direction(
    shifted: &[f64],
    jac: &TaskJacobian,
    z: &SimplexWeights,
) -> Result<(Vec<f64>, f64, SimplexWeights)> {
    check_len(jac.num_tasks(), shifted.len())?;
    let (w, c) = renormalize(shifted, z)?;
    let d = jac.combine(&w)?;
    Ok((d, c, w))
}

/// `δ = Aᵀ(log ℓ_prev − log ℓ_curr)` at the logits that produced the step.
pub fn logit_gradient(xi: &Logits, prev: &[f64], curr: &[f64]) -> Result<Vec<f64>> {
    check_len(xi.len(), prev.len())?;
    check_len(xi.len(), curr.len())?;
    let z = xi.softmax();
    let v: Vec<f64> = prev.iter().zip(curr).map(|(a, b)| a.ln() - b.ln()).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("log-loss change is not finite: {v:?}")));
    }
    Ok(jvp_with_weights(&z, &v))
}

/// Closed form of the decayed plain-gradient logit recursion started at
/// `ξ = 0`: `ξ_{T+1} = −β Σ_{j<T} (1−βγ)^j δ_{T−j}`.
pub fn famo_ema_expansion(deltas: &[Vec<f64>], beta: f64, gamma: f64) -> Vec<f64> {
    let Some(first) = deltas.first() else { return Vec::new() };
    let decay = 1.0 - beta * gamma;
    let mut xi = vec![0.0; first.len()];
    for (age, d) in deltas.iter().rev().enumerate() {
        let f = -beta * decay.powi(age as i32);
        for (x, di) in xi.iter_mut().zip(d) {
            *x += f * di;
        }
    }
    xi
}

/// `(‖Σ z_i ∇log ℓ_i‖, ‖ξ‖)` with `z = softmax(ξ)` and losses shifted by
/// `min_losses` and `eps`. Both vanish at a stationary point of the
/// continuous-time dynamics.
pub fn continuous_limit_residual(
    problem: &dyn MultiTaskProblem,
    theta: &[f64],
    xi: &Logits,
    min_losses: &[f64],
    eps: f64,
) -> Result<(f64, f64)> {
    check_len(problem.num_tasks(), xi.len())?;
    let shifted = shift_losses(&problem.losses(theta), min_losses, eps);
    let log_jac = problem.jacobian(theta).to_log_loss(&shifted)?;
    let d = log_jac.combine(&xi.softmax())?;
    Ok((norm(&d), norm(xi.as_slice())))
}

/// The logits and their optimizer, separate from how `θ` moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamoWeighting {
    config: FamoConfig,
    logits: Logits,
    logit_opt: Option<MomentUpdater>,
}

impl FamoWeighting {
    pub fn new(k: usize, config: FamoConfig) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::InvalidInput("need at least one task".into()));
        }
        let logit_opt = match config.logit_mode {
            LogitMode::PlainGd => None,
            LogitMode::Moment => Some(MomentUpdater::new(k, config.beta, config.gamma)),
        };
        Ok(Self { config, logits: Logits::zeros(k), logit_opt })
    }

    pub fn config(&self) -> &FamoConfig {
        &self.config
    }

    pub fn logits(&self) -> &Logits {
        &self.logits
    }

    pub fn weights(&self) -> SimplexWeights {
        self.logits.softmax()
    }

    /// Logits after applying `δ`, without changing state.
    pub fn propose(&self, delta: &[f64]) -> Result<Vec<f64>> {
        let xi = self.logits.as_slice();
        check_len(xi.len(), delta.len())?;
        let next = match &self.logit_opt {
            None => {
                let (b, g) = (self.config.beta, self.config.gamma);
                xi.iter().zip(delta).map(|(x, d)| x - b * (d + g * x)).collect()
            }
            Some(opt) => opt.propose(xi, delta)?,
        };
        if next.iter().any(|x: &f64| !x.is_finite()) {
            return Err(Error::Numerical("logit update produced non-finite values".into()));
        }
        Ok(next)
    }

    fn commit(&mut self, delta: &[f64], next: Vec<f64>) -> Result<()> {
        if let Some(opt) = &mut self.logit_opt {
            opt.commit(self.logits.as_slice(), delta)?;
        }
        self.logits.set(next)
    }

    /// One logit update with gradient `δ`.
    pub fn apply(&mut self, delta: &[f64]) -> Result<()> {
        let next = self.propose(delta)?;
        self.commit(delta, next)
    }

    /// Replaces the logits, resetting any moment state.
    pub fn reset_logits(&mut self, xi: Vec<f64>) -> Result<()> {
        let k = self.logits.len();
        check_len(k, xi.len())?;
        self.logits.set(xi)?;
        if let Some(opt) = &mut self.logit_opt {
            *opt = MomentUpdater::new(k, self.config.beta, self.config.gamma);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FamoCounters {
    pub gradient: u64,
    pub loss: u64,
}

/// FAMO optimizer state; [`FamoState::to_json`] gives a resumable checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamoState {
    theta: Vec<f64>,
    weighting: FamoWeighting,
    updater: ParamUpdater,
    min_losses: Vec<f64>,
    /// Shifted losses at the current `θ`, once a step has been taken.
    prev_losses: Option<Vec<f64>>,
    step: u64,
    counters: FamoCounters,
}

impl FamoState {
    pub fn new(theta: Vec<f64>, min_losses: Vec<f64>, updater: ParamUpdater, config: FamoConfig) -> Result<Self> {
        if let ParamUpdater::Moment(m) = &updater {
            check_len(theta.len(), m.dim())?;
        }
        let weighting = FamoWeighting::new(min_losses.len(), config)?;
        Ok(Self { theta, weighting, updater, min_losses, prev_losses: None, step: 0, counters: FamoCounters::default() })
    }

    /// Plain gradient steps of size `alpha` on `θ`.
    pub fn with_sgd(problem: &dyn MultiTaskProblem, theta: Vec<f64>, alpha: f64, config: FamoConfig) -> Result<Self> {
        check_len(problem.dim(), theta.len())?;
        Self::new(theta, problem.min_losses().to_vec(), ParamUpdater::sgd(alpha), config)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn logits(&self) -> &Logits {
        self.weighting.logits()
    }

    pub fn weighting(&self) -> &FamoWeighting {
        &self.weighting
    }

    pub fn prev_losses(&self) -> Option<&[f64]> {
        self.prev_losses.as_deref()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn counters(&self) -> FamoCounters {
        self.counters
    }

    pub fn config(&self) -> &FamoConfig {
        self.weighting.config()
    }

    fn shifted(&self, raw: &[f64], at: &str) -> Result<Vec<f64>> {
        check_len(self.min_losses.len(), raw.len())?;
        let s = shift_losses(raw, &self.min_losses, self.config().eps);
        if let Some(i) = s.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Numerical(format!(
                "step {}: shifted loss {i} at {at} is {} (raw {}, min {})",
                self.step, s[i], raw[i], self.min_losses[i]
            )));
        }
        Ok(s)
    }

    /// One step: a single weighted-gradient evaluation and two loss
    /// evaluations. A step that would leave non-finite or non-positive
    /// shifted losses is rolled back and reported.
    pub fn step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo> {
        check_len(self.theta.len(), problem.dim())?;
        self.counters.loss += 1;
        let prev = self.shifted(&problem.losses(&self.theta), "θ_t")?;
        let (w, _c) = renormalize(&prev, &self.weighting.weights())?;
        self.counters.gradient += 1;
        let d = problem.weighted_gradient(&self.theta, &w);
        let next = self.updater.propose(&self.theta, &d).map_err(|e| self.rollback(e))?;
        self.counters.loss += 1;
        let curr = self.shifted(&problem.losses(&next), "θ_{t+1}").map_err(|e| self.rollback(e))?;
        let delta = logit_gradient(self.weighting.logits(), &prev, &curr).map_err(|e| self.rollback(e))?;
        let xi = self.weighting.propose(&delta).map_err(|e| self.rollback(e))?;

        self.updater.commit(&self.theta, &d)?;
        self.weighting.commit(&delta, xi)?;
        self.theta = next;
        self.prev_losses = Some(curr);
        self.step += 1;
        Ok(StepInfo { d_norm: norm(&d), weights: w.into_vec(), logit_grad: Some(delta) })
    }

    fn rollback(&self, e: Error) -> Error {
        log::warn!("FAMO step {} rolled back: {e}", self.step);
        Error::Numerical(format!("step {} rolled back: {e}", self.step))
    }

    /// Validation mode: solves the log-loss dual exactly (`k` gradient
    /// evaluations), steps along the renormalized optimum and sets the
    /// logits to `log z*`.
    pub fn exact_dual_step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo> {
        check_len(self.theta.len(), problem.dim())?;
        self.counters.loss += 1;
        let prev = self.shifted(&problem.losses(&self.theta), "θ_t")?;
        self.counters.gradient += problem.num_tasks() as u64;
        let raw = problem.jacobian(&self.theta);
        let opts = MinNormOptions { tol: self.config().dual_tol, max_iter: self.config().dual_max_iter };
        let sol = solve_min_norm_on_simplex(&raw.to_log_loss(&prev)?, opts)?;
        if !sol.converged {
            return Err(Error::NotConverged { iterations: sol.iterations, residual: sol.gap });
        }
        let (d, _c, w) = famo_weighted_direction(&prev, &raw, &sol.weights)?;
        let next = self.updater.propose(&self.theta, &d)?;
        let xi: Vec<f64> = sol.weights.iter().map(|&z| z.max(f64::MIN_POSITIVE).ln()).collect();
        let mut weighting = self.weighting.clone();
        weighting.reset_logits(xi)?;

        self.updater.commit(&self.theta, &d)?;
        self.weighting = weighting;
        self.theta = next;
        self.step += 1;
        Ok(StepInfo { d_norm: norm(&d), weights: w.into_vec(), logit_grad: None })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        check_len(s.min_losses.len(), s.weighting.logits().len())?;
        Ok(s)
    }
}

impl Optimizer for FamoState {
    fn name(&self) -> &str {
        "famo"
    }
    fn theta(&self) -> &[f64] {
        &self.theta
    }
    fn step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo> {
        FamoState::step(self, problem)
    }
}
