//! Two-task, two-parameter objective with badly scaled, conflicting losses.
//!
//! ```text
//! L1 = 0.1·(c1·f1 + c2·g1)        L2 = c1·f2 + c2·g2
//! f1 = ln(max(|0.5(−θ1 − 7) − tanh(−θ2)|, 5e-6)) + 6
//! f2 = ln(max(|0.5(−θ1 + 3) − tanh(−θ2) + 2|, 5e-6)) + 6
//! g1 = ((−θ1 + 7)² + 0.1(−θ2 − 8)²)/10 − 20
//! g2 = ((−θ1 − 7)² + 0.1(−θ2 − 8)²)/10 − 20
//! c1 = max(tanh(0.5θ2), 0)         c2 = max(tanh(−0.5θ2), 0)
//! ```
//!
//! At an exact tie inside a `max` the derivative is the average of the two
//! one-sided derivatives (the convention reverse-mode autodiff uses for
//! `maximum`), and the gradient is flagged.

use crate::jacobian::{GradientKind, TaskJacobian};

use super::MultiTaskProblem;

const CLAMP: f64 = 0.000005;

/// Initial points of the trajectory experiment.
pub const TOY_INITS: [[f64; 2]; 5] = [[-8.5, 7.5], [-8.5, 5.0], [0.0, 0.0], [9.0, 9.0], [10.0, -8.0]];

/// Per-task infima, located numerically (`oracles/toy_minima.py`) at
/// θ = (±7, −8.43445985551609…) and rounded down by a few ulps so that
/// `ℓ − ℓ*` is never negative in floating point.
pub const TOY_MIN_LOSSES: [f64; 2] = [-1.998_942_513_696_087, -19.989_425_136_960_87];

struct Clamped {
    value: f64,
    slope: f64,
    kink: bool,
}

/// `ln(max(|a|, CLAMP))` and its derivative in `a`.
fn log_clamp(a: f64) -> Clamped {
    let abs = a.abs();
    if abs > CLAMP {
        Clamped { value: abs.ln(), slope: 1.0 / a, kink: false }
    } else if abs < CLAMP {
        Clamped { value: CLAMP.ln(), slope: 0.0, kink: false }
    } else {
        Clamped { value: CLAMP.ln(), slope: 0.5 / a, kink: true }
    }
}

/// `max(tanh(x), 0)` and its derivative in `x`.
fn relu_tanh(x: f64) -> Clamped {
    let t = x.tanh();
    if t > 0.0 {
        Clamped { value: t, slope: 1.0 - t * t, kink: false }
    } else if t < 0.0 {
        Clamped { value: 0.0, slope: 0.0, kink: false }
    } else {
        Clamped { value: 0.0, slope: 0.5, kink: true }
    }
}

pub fn toy2d_loss(theta: [f64; 2]) -> [f64; 2] {
    let [x1, x2] = theta;
    let f1 = log_clamp(0.5 * (-x1 - 7.0) - (-x2).tanh()).value + 6.0;
    let f2 = log_clamp(0.5 * (-x1 + 3.0) - (-x2).tanh() + 2.0).value + 6.0;
    let g1 = ((-x1 + 7.0).powi(2) + 0.1 * (-x2 - 8.0).powi(2)) / 10.0 - 20.0;
    let g2 = ((-x1 - 7.0).powi(2) + 0.1 * (-x2 - 8.0).powi(2)) / 10.0 - 20.0;
    let c1 = relu_tanh(0.5 * x2).value;
    let c2 = relu_tanh(-0.5 * x2).value;
    [0.1 * (c1 * f1 + c2 * g1), c1 * f2 + c2 * g2]
}

#[derive(Debug, Clone)]
pub struct ToyGradient {
    pub jacobian: TaskJacobian,
    /// Set when θ sits exactly on a non-differentiable point.
    pub at_kink: bool,
}

pub fn toy2d_grad(theta: [f64; 2]) -> ToyGradient {
    let [x1, x2] = theta;
    let th = (-x2).tanh();
    // d/dθ2 of −tanh(−θ2)
    let dth = 1.0 - th * th;

    let a1 = 0.5 * (-x1 - 7.0) - th;
    let a2 = 0.5 * (-x1 + 3.0) - th + 2.0;
    let lf1 = log_clamp(a1);
    let lf2 = log_clamp(a2);
    let f1 = lf1.value + 6.0;
    let f2 = lf2.value + 6.0;
    let df1 = [lf1.slope * -0.5, lf1.slope * dth];
    let df2 = [lf2.slope * -0.5, lf2.slope * dth];

    let g1 = ((-x1 + 7.0).powi(2) + 0.1 * (-x2 - 8.0).powi(2)) / 10.0 - 20.0;
    let g2 = ((-x1 - 7.0).powi(2) + 0.1 * (-x2 - 8.0).powi(2)) / 10.0 - 20.0;
    let dg_x2 = -0.02 * (-x2 - 8.0);
    let dg1 = [-(-x1 + 7.0) / 5.0, dg_x2];
    let dg2 = [-(-x1 - 7.0) / 5.0, dg_x2];

    let rc1 = relu_tanh(0.5 * x2);
    let rc2 = relu_tanh(-0.5 * x2);
    let (c1, c2) = (rc1.value, rc2.value);
    let dc1 = [0.0, 0.5 * rc1.slope];
    let dc2 = [0.0, -0.5 * rc2.slope];

    let mut rows = vec![vec![0.0; 2], vec![0.0; 2]];
    for j in 0..2 {
        rows[0][j] = 0.1 * (dc1[j] * f1 + c1 * df1[j] + dc2[j] * g1 + c2 * dg1[j]);
        rows[1][j] = dc1[j] * f2 + c1 * df2[j] + dc2[j] * g2 + c2 * dg2[j];
    }
    ToyGradient {
        jacobian: TaskJacobian::from_rows(rows, GradientKind::RawLoss).expect("2x2"),
        at_kink: lf1.kink || lf2.kink || rc1.kink || rc2.kink,
    }
}

/// True when θ is within `margin` of the clamp or tanh-kink sets, where
/// finite differences straddle a non-differentiable point.
pub fn near_kink(theta: [f64; 2], margin: f64) -> bool {
    let [x1, x2] = theta;
    let th = (-x2).tanh();
    let a1 = 0.5 * (-x1 - 7.0) - th;
    let a2 = 0.5 * (-x1 + 3.0) - th + 2.0;
    x2.abs() < margin || (a1.abs() - CLAMP).abs() < margin || (a2.abs() - CLAMP).abs() < margin
}

#[derive(Debug, Clone)]
pub struct Toy2d {
    min_losses: [f64; 2],
}

impl Default for Toy2d {
    fn default() -> Self {
        Self { min_losses: TOY_MIN_LOSSES }
    }
}

impl Toy2d {
    pub fn new() -> Self {
        Self::default()
    }
}

fn pair(theta: &[f64]) -> [f64; 2] {
    assert_eq!(theta.len(), 2, "toy2d takes a 2-vector");
    [theta[0], theta[1]]
}

impl MultiTaskProblem for Toy2d {
    fn name(&self) -> &str {
        "toy2d"
    }
    fn num_tasks(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        2
    }
    fn min_losses(&self) -> &[f64] {
        &self.min_losses
    }
    fn losses(&self, theta: &[f64]) -> Vec<f64> {
        toy2d_loss(pair(theta)).to_vec()
    }
    fn jacobian(&self, theta: &[f64]) -> TaskJacobian {
        toy2d_grad(pair(theta)).jacobian
    }
}
