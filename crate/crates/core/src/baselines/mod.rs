//! Comparison optimizers: loss weightings and gradient-manipulation methods.

mod amortized;
mod cagrad;
mod imtl;
mod nash;
mod pcgrad;
mod weighting;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use amortized::{amortized_cagrad_probe, amortized_nashmtl_probe, ProbeEstimate};
pub use cagrad::{cagrad_direction, cagrad_objective, CagradOptions, CagradSolution, DEFAULT_C};
pub use imtl::{imtlg_direction, ImtlSolution};
pub use nash::{nash_gradient, nash_residual, nashmtl_direction, solve_nash_weights, NashOptions, NashSolution, WEIGHT_FLOOR};
pub use pcgrad::pcgrad_direction;
pub use weighting::{ls_direction, rlw_weights, si_direction, si_weights};

use crate::dual::{solve_min_norm_on_simplex, MinNormOptions, MinNormSolution};
use crate::error::{check_len, Error, Result};
use crate::jacobian::TaskJacobian;
use crate::moment::ParamUpdater;
use crate::optimizer::{Optimizer, StepInfo};
use crate::problems::{shift_losses, MultiTaskProblem};
use crate::simplex::project_simplex;
use crate::vecops::{axpy, norm};

/// Min-norm convex combination of the raw task gradients.
pub fn mgda_direction(jac: &TaskJacobian, opts: MinNormOptions) -> Result<MinNormSolution> {
    solve_min_norm_on_simplex(jac, opts)
}

fn default_eps() -> f64 {
    1e-8
}
fn default_c() -> f64 {
    DEFAULT_C
}
fn default_probe() -> f64 {
    1e-5
}
fn default_weight_lr() -> f64 {
    0.1
}
fn default_every() -> u64 {
    1
}
fn default_nash_tol() -> f64 {
    NashOptions::default().tol
}
fn default_nash_iter() -> usize {
    NashOptions::default().max_iter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Ls,
    Si {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Rlw,
    Mgda,
    Pcgrad,
    Cagrad {
        #[serde(default = "default_c")]
        c: f64,
    },
    ImtlG,
    NashMtl {
        #[serde(default = "default_nash_tol")]
        tol: f64,
        #[serde(default = "default_nash_iter")]
        max_iter: usize,
    },
    AmortizedCagrad {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_probe")]
        probe_step: f64,
        #[serde(default = "default_weight_lr")]
        weight_lr: f64,
        #[serde(default = "default_every")]
        update_every: u64,
    },
    AmortizedNashMtl {
        #[serde(default = "default_probe")]
        probe_step: f64,
        #[serde(default = "default_weight_lr")]
        weight_lr: f64,
        #[serde(default = "default_every")]
        update_every: u64,
    },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Si { .. } => "si",
            Method::Rlw => "rlw",
            Method::Mgda => "mgda",
            Method::Pcgrad => "pcgrad",
            Method::Cagrad { .. } => "cagrad",
            Method::ImtlG => "imtl_g",
            Method::NashMtl { .. } => "nash_mtl",
            Method::AmortizedCagrad { .. } => "amortized_cagrad",
            Method::AmortizedNashMtl { .. } => "amortized_nash_mtl",
        }
    }

    /// Gradient evaluations per step for `k` tasks.
    pub fn gradient_evals_per_step(&self, k: usize) -> u64 {
        match self {
            Method::Ls | Method::Si { .. } | Method::Rlw => 1,
            Method::AmortizedCagrad { .. } | Method::AmortizedNashMtl { .. } => 2,
            _ => k as u64,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{}: {what}", self.label())));
        match *self {
            Method::Si { eps } if !(eps > 0.0) => bad("eps must be > 0"),
            Method::Cagrad { c } if !(c >= 0.0) => bad("c must be ≥ 0"),
            Method::NashMtl { tol, .. } if !(tol > 0.0) => bad("tol must be > 0"),
            Method::AmortizedCagrad { c, probe_step, weight_lr, update_every } => {
                if !(c >= 0.0 && probe_step > 0.0 && weight_lr > 0.0 && update_every >= 1) {
                    bad("c ≥ 0, probe_step > 0, weight_lr > 0 and update_every ≥ 1 required")
                } else {
                    Ok(())
                }
            }
            Method::AmortizedNashMtl { probe_step, weight_lr, update_every } => {
                if !(probe_step > 0.0 && weight_lr > 0.0 && update_every >= 1) {
                    bad("probe_step > 0, weight_lr > 0 and update_every ≥ 1 required")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Parameters, the method, and whatever the method carries between steps.
#[derive(Debug, Clone)]
pub struct BaselineState {
    theta: Vec<f64>,
    method: Method,
    updater: ParamUpdater,
    rng: ChaCha8Rng,
    min_losses: Vec<f64>,
    /// Iterate of the amortized methods.
    weights: Vec<f64>,
    step: u64,
}

impl BaselineState {
    pub fn new(
        problem: &dyn MultiTaskProblem,
        theta: Vec<f64>,
        method: Method,
        updater: ParamUpdater,
        seed: u64,
    ) -> Result<Self> {
        method.validate()?;
        check_len(problem.dim(), theta.len())?;
        let k = problem.num_tasks();
        let weights = match method {
            Method::AmortizedNashMtl { .. } => vec![1.0; k],
            _ => vec![1.0 / k as f64; k],
        };
        Ok(Self {
            theta,
            method,
            updater,
            rng: ChaCha8Rng::seed_from_u64(seed),
            min_losses: problem.min_losses().to_vec(),
            weights,
            step: 0,
        })
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Returns `(d, reported weights)` for the current `θ`.
    fn direction(&mut self, p: &dyn MultiTaskProblem) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = p.num_tasks();
        let theta = &self.theta;
        Ok(match self.method {
            Method::Ls => {
                let w = vec![1.0 / k as f64; k];
                (p.weighted_gradient(theta, &w), w)
            }
            Method::Si { eps } => {
                let w = si_weights(&shift_losses(&p.losses(theta), &self.min_losses, eps))?;
                (p.weighted_gradient(theta, &w), w)
            }
            Method::Rlw => {
                let w = rlw_weights(&mut self.rng, k).into_vec();
                (p.weighted_gradient(theta, &w), w)
            }
            Method::Mgda => {
                let s = mgda_direction(&p.jacobian(theta), MinNormOptions::default())?;
                if !s.converged {
                    log::warn!("MGDA: dual gap {:e} after {} iterations", s.gap, s.iterations);
                }
                (s.direction, s.weights.into_vec())
            }
            Method::Pcgrad => (pcgrad_direction(&p.jacobian(theta), &mut self.rng), vec![1.0 / k as f64; k]),
            Method::Cagrad { c } => {
                let s = cagrad_direction(&p.jacobian(theta), c, CagradOptions::default())?;
                (s.direction, s.effective_weights)
            }
            Method::ImtlG => {
                let s = imtlg_direction(&p.jacobian(theta))?;
                (s.direction, s.weights)
            }
            Method::NashMtl { tol, max_iter } => {
                let s = nashmtl_direction(&p.jacobian(theta), NashOptions { tol, max_iter })?;
                (s.direction, s.weights)
            }
            Method::AmortizedCagrad { c, probe_step, weight_lr, update_every } => {
                // The step direction uses the weights the probe saw.
                let w_used = self.weights.clone();
                let (g0, gw) = if self.step.is_multiple_of(update_every) {
                    let est = amortized_cagrad_probe(p, theta, &self.weights, c, probe_step)?;
                    if let Some(g) = &est.gradient {
                        let y: Vec<f64> = self.weights.iter().zip(g).map(|(w, gi)| w - weight_lr * gi).collect();
                        self.weights = project_simplex(&y)?.into_vec();
                    }
                    (est.g0, est.gw)
                } else {
                    (p.weighted_gradient(theta, &vec![1.0 / k as f64; k]), p.weighted_gradient(theta, &w_used))
                };
                let (g0n, gwn) = (norm(&g0), norm(&gw));
                let mut d = g0;
                let mut eff = vec![1.0 / k as f64; k];
                if gwn > 0.0 {
                    let mu = c * g0n / gwn;
                    axpy(mu, &gw, &mut d);
                    eff.iter_mut().zip(&w_used).for_each(|(e, w)| *e += mu * w);
                }
                (d, eff)
            }
            Method::AmortizedNashMtl { probe_step, weight_lr, update_every } => {
                let w_used = self.weights.clone();
                let gw = if self.step.is_multiple_of(update_every) {
                    let est = amortized_nashmtl_probe(p, theta, &self.weights, probe_step)?;
                    if let Some(g) = &est.gradient {
                        for (w, gi) in self.weights.iter_mut().zip(g) {
                            *w = (*w - weight_lr * gi).max(WEIGHT_FLOOR);
                        }
                    }
                    est.gw
                } else {
                    p.weighted_gradient(theta, &self.weights)
                };
                (gw, w_used)
            }
        })
    }

    /// One step `θ ← θ − α·d`. On error `θ` and the optimizer state are
    /// unchanged.
    pub fn step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo> {
        check_len(self.theta.len(), problem.dim())?;
        let saved = (self.weights.clone(), self.rng.clone());
        let result = self.direction(problem).and_then(|(d, w)| {
            let next = self.updater.propose(&self.theta, &d)?;
            Ok((d, w, next))
        });
        let (d, w, next) = match result {
            Ok(v) => v,
            Err(e) => {
                (self.weights, self.rng) = saved;
                return Err(e);
            }
        };
        self.updater.commit(&self.theta, &d)?;
        self.theta = next;
        self.step += 1;
        Ok(StepInfo { weights: w, d_norm: norm(&d), logit_grad: None })
    }
}

impl Optimizer for BaselineState {
    fn name(&self) -> &str {
        self.method.label()
    }
    fn theta(&self) -> &[f64] {
        &self.theta
    }
    fn step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo> {
        BaselineState::step(self, problem)
    }
}
