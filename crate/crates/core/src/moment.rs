//! Bias-corrected first/second moment updater with weight decay folded into
//! the gradient before moment accumulation.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const STABILIZER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentUpdater {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
}

impl MomentUpdater {
    pub fn new(dim: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            first: vec![0.0; dim],
            second: vec![0.0; dim],
            step: 0,
            lr,
            beta1: BETA1,
            beta2: BETA2,
            weight_decay,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    fn check(&self, param: &[f64], grad: &[f64]) -> Result<()> {
        check_len(self.first.len(), param.len())?;
        check_len(self.first.len(), grad.len())?;
        check_finite("grad", grad).map_err(|e| Error::Numerical(format!("update skipped: {e}")))
    }

    /// Parameter value the next update would produce, without advancing state.
    pub fn propose(&self, param: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        self.check(param, grad)?;
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        Ok((0..param.len())
            .map(|i| {
                let g = grad[i] + self.weight_decay * param[i];
                let m = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
                let v = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
                param[i] - self.lr * (m / bc1) / ((v / bc2).sqrt() + STABILIZER)
            })
            .collect())
    }

    /// Advances the moments as if `param` had been updated with `grad`.
    pub fn commit(&mut self, param: &[f64], grad: &[f64]) -> Result<()> {
        self.check(param, grad)?;
        for i in 0..param.len() {
            let g = grad[i] + self.weight_decay * param[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
        }
        self.step += 1;
        Ok(())
    }

    /// One in-place update. On error neither `param` nor the state changes.
    pub fn update(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        let next = self.propose(param, grad)?;
        self.commit(param, grad)?;
        param.copy_from_slice(&next);
        Ok(())
    }
}

/// How model parameters move along an update direction `d` (`θ − step(d)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamUpdater {
    /// `θ ← θ − lr·d`
    Sgd { lr: f64 },
    /// Moment-based update on `d`.
    Moment(MomentUpdater),
}

impl ParamUpdater {
    pub fn sgd(lr: f64) -> Self {
        Self::Sgd { lr }
    }

    pub fn moment(dim: usize, lr: f64) -> Self {
        Self::Moment(MomentUpdater::new(dim, lr, 0.0))
    }

    pub fn propose(&self, theta: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Sgd { lr } => {
                check_len(theta.len(), d.len())?;
                check_finite("d", d).map_err(|e| Error::Numerical(format!("update skipped: {e}")))?;
                Ok(theta.iter().zip(d).map(|(t, di)| t - lr * di).collect())
            }
            Self::Moment(m) => m.propose(theta, d),
        }
    }

    pub fn commit(&mut self, theta: &[f64], d: &[f64]) -> Result<()> {
        match self {
            Self::Sgd { .. } => Ok(()),
            Self::Moment(m) => m.commit(theta, d),
        }
    }
}
