//! Synthetic multitask problems with analytic gradients and known minima.

mod gradcheck;
mod quadratic;
mod toy;

use std::sync::atomic::{AtomicU64, Ordering};

pub use gradcheck::{check_gradients, GradCheckReport, GRADCHECK_TOL};
pub use quadratic::{make_quadratic_bank, Curvature, QuadraticBank, QuadraticBankSpec, QuadraticTaskSpec};
pub use toy::{near_kink, toy2d_grad, toy2d_loss, Toy2d, ToyGradient, TOY_INITS, TOY_MIN_LOSSES};

use crate::jacobian::TaskJacobian;

/// `k` deterministic, bounded-below losses over a shared parameter vector.
pub trait MultiTaskProblem: Send + Sync {
    fn name(&self) -> &str;
    fn num_tasks(&self) -> usize;
    fn dim(&self) -> usize;
    /// `ℓ_i* = inf ℓ_i` for every task.
    fn min_losses(&self) -> &[f64];
    /// One loss-vector evaluation (forward pass).
    fn losses(&self, theta: &[f64]) -> Vec<f64>;
    /// All `k` task gradients (`k` gradient evaluations).
    fn jacobian(&self, theta: &[f64]) -> TaskJacobian;
    /// Gradient of `Σ_i w_i·ℓ_i` (one gradient evaluation). Weights are
    /// arbitrary reals.
    fn weighted_gradient(&self, theta: &[f64], weights: &[f64]) -> Vec<f64> {
        self.jacobian(theta)
            .combine(weights)
            .expect("one weight per task")
    }
}

impl<P: MultiTaskProblem + ?Sized> MultiTaskProblem for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn num_tasks(&self) -> usize {
        (**self).num_tasks()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn min_losses(&self) -> &[f64] {
        (**self).min_losses()
    }
    fn losses(&self, theta: &[f64]) -> Vec<f64> {
        (**self).losses(theta)
    }
    fn jacobian(&self, theta: &[f64]) -> TaskJacobian {
        (**self).jacobian(theta)
    }
    fn weighted_gradient(&self, theta: &[f64], weights: &[f64]) -> Vec<f64> {
        (**self).weighted_gradient(theta, weights)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvalCounts {
    /// Per-task gradient evaluations (a jacobian costs `k`).
    pub gradient: u64,
    /// Loss-vector evaluations.
    pub loss: u64,
}

impl std::ops::Sub for EvalCounts {
    type Output = EvalCounts;
    fn sub(self, rhs: Self) -> Self {
        EvalCounts { gradient: self.gradient - rhs.gradient, loss: self.loss - rhs.loss }
    }
}

/// Instrumented view of a problem that counts evaluations at the boundary.
pub struct Counted<'a> {
    inner: &'a dyn MultiTaskProblem,
    gradient: AtomicU64,
    loss: AtomicU64,
}

impl<'a> Counted<'a> {
    pub fn new(inner: &'a dyn MultiTaskProblem) -> Self {
        Self { inner, gradient: AtomicU64::new(0), loss: AtomicU64::new(0) }
    }

    pub fn counts(&self) -> EvalCounts {
        EvalCounts {
            gradient: self.gradient.load(Ordering::Relaxed),
            loss: self.loss.load(Ordering::Relaxed),
        }
    }
}

impl MultiTaskProblem for Counted<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn num_tasks(&self) -> usize {
        self.inner.num_tasks()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn min_losses(&self) -> &[f64] {
        self.inner.min_losses()
    }
    fn losses(&self, theta: &[f64]) -> Vec<f64> {
        self.loss.fetch_add(1, Ordering::Relaxed);
        self.inner.losses(theta)
    }
    fn jacobian(&self, theta: &[f64]) -> TaskJacobian {
        self.gradient.fetch_add(self.inner.num_tasks() as u64, Ordering::Relaxed);
        self.inner.jacobian(theta)
    }
    fn weighted_gradient(&self, theta: &[f64], weights: &[f64]) -> Vec<f64> {
        self.gradient.fetch_add(1, Ordering::Relaxed);
        self.inner.weighted_gradient(theta, weights)
    }
}

/// `ℓ_i − ℓ_i* + ε`
pub fn shift_losses(losses: &[f64], min_losses: &[f64], eps: f64) -> Vec<f64> {
    losses.iter().zip(min_losses).map(|(l, m)| l - m + eps).collect()
}
