use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineState, Method};
use crate::error::{Error, Result};
use crate::famo::{FamoConfig, FamoState};
use crate::metrics::{delta_m_percent, Direction, MetricTable};
use crate::optimizer::Optimizer;
use crate::problems::{make_quadratic_bank, MultiTaskProblem, QuadraticBankSpec};

use super::config::UpdaterSpec;

pub const SWEEP_GAMMAS: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const STATIONARY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    /// Per-task loss scales; the imbalance under test.
    pub scales: Vec<f64>,
    pub steps: u64,
    pub updater: UpdaterSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k: 3,
            m: 10,
            seed: 7,
            scales: vec![1.0, 10.0, 100.0],
            steps: 50_000,
            // Adam at a constant rate keeps circling the compromise point.
            updater: UpdaterSpec::Sgd { lr: 1e-3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub final_losses: Vec<f64>,
    pub delta_m_percent: f64,
    /// Finite losses that moved by at most `STATIONARY_TOL` (relative) over
    /// the last tenth of the budget.
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub reference: Vec<f64>,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub table: Option<MetricTable>,
}

/// Losses at 90% of the budget and at the end.
fn drive(opt: &mut dyn Optimizer, problem: &dyn MultiTaskProblem, steps: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mark = steps - steps / 10;
    let mut at_mark = Vec::new();
    for t in 0..steps {
        if t == mark {
            at_mark = problem.losses(opt.theta());
        }
        opt.step(problem)?;
    }
    let fin = problem.losses(opt.theta());
    if at_mark.is_empty() {
        at_mark = fin.clone();
    }
    Ok((at_mark, fin))
}

/// Final FAMO losses per `γ` against single-task runs with the same budget,
/// all from `θ = 0`.
///
/// FAMO shifts by zero here rather than by the bank's attainable minima:
/// with exact minima each `log(ℓ_i − ℓ*_i)` is unbounded below and the
/// run collapses onto one task.
pub fn gamma_sweep(cfg: &SweepConfig, gammas: &[f64]) -> Result<SweepResult> {
    if gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Config("γ values must be > 0".into()));
    }
    if cfg.steps == 0 {
        return Err(Error::Config("steps must be ≥ 1".into()));
    }
    if cfg.scales.len() != cfg.k {
        return Err(Error::Config(format!("{} scales given for {} tasks", cfg.scales.len(), cfg.k)));
    }
    let spec = QuadraticBankSpec::random(cfg.k, cfg.m, cfg.seed).with_scales(&cfg.scales);
    let bank = make_quadratic_bank(&spec)?;
    let theta0 = vec![0.0; cfg.m];

    let mut reference = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let single = QuadraticBankSpec { k: 1, m: cfg.m, seed: cfg.seed, tasks: vec![spec.tasks[i].clone()] };
        let p = make_quadratic_bank(&single)?;
        let mut opt = BaselineState::new(&p, theta0.clone(), Method::Ls, cfg.updater.build(cfg.m)?, cfg.seed)?;
        reference.push(drive(&mut opt, &p, cfg.steps)?.1[0]);
    }

    let tasks = (0..cfg.k).map(|i| format!("task{i}")).collect();
    let mut table = MetricTable::new(tasks, vec![Direction::LowerBetter; cfg.k], reference.clone())?;
    let mut rows = Vec::new();
    for (j, &gamma) in gammas.iter().enumerate() {
        let famo = FamoConfig { gamma, ..FamoConfig::default() };
        let mut opt = FamoState::new(theta0.clone(), vec![0.0; cfg.k], cfg.updater.build(cfg.m)?, famo)?;
        let (mark, fin) = drive(&mut opt, &bank, cfg.steps)?;
        let mut name = format!("famo_gamma_{gamma:e}");
        if gammas[..j].contains(&gamma) {
            name.push_str(&format!("_{j}"));
        }
        table.add_method(name.clone(), fin.clone())?;
        let converged =
            fin.iter().zip(&mark).all(|(f, a)| f.is_finite() && (f - a).abs() <= STATIONARY_TOL * a.abs());
        rows.push(SweepRow { gamma, delta_m_percent: delta_m_percent(&table, &name)?, final_losses: fin, converged });
    }
    Ok(SweepResult { reference, rows, table: Some(table) })
}
