use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineState;
use crate::error::{Error, Result};
use crate::famo::FamoState;
use crate::optimizer::{Optimizer, StepInfo};
use crate::problems::{Counted, MultiTaskProblem};

use super::config::{MethodSpec, RunConfig};
use super::pareto::ParetoFront;

/// One JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Losses after the step.
    pub losses: Vec<f64>,
    pub weights: Vec<f64>,
    pub d_norm: f64,
    pub grad_evals: u64,
    pub loss_evals: u64,
    pub t_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub method: String,
    pub steps_completed: u64,
    pub final_theta: Vec<f64>,
    pub final_losses: Vec<f64>,
    pub total_grad_evals: u64,
    pub total_loss_evals: u64,
    /// Sum of per-step wall time.
    pub total_ns: u64,
    /// Set when the run stopped early.
    pub failure: Option<String>,
    /// Per task: final loss within `1e-3·max(1, |ℓ*|)` of its infimum.
    pub converged: Vec<bool>,
    pub pareto_proximity: Option<f64>,
    pub reached_front: Option<bool>,
}

struct FamoExact(FamoState);

impl Optimizer for FamoExact {
    fn name(&self) -> &str {
        "famo_exact"
    }
    fn theta(&self) -> &[f64] {
        self.0.theta()
    }
    fn step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo> {
        self.0.exact_dual_step(problem)
    }
}

pub fn build_optimizer(cfg: &RunConfig, problem: &dyn MultiTaskProblem, theta: Vec<f64>) -> Result<Box<dyn Optimizer>> {
    let updater = cfg.updater.build(problem.dim())?;
    let min = problem.min_losses().to_vec();
    Ok(match &cfg.method {
        MethodSpec::Famo(c) => Box::new(FamoState::new(theta, min, updater, *c)?),
        MethodSpec::FamoExact(c) => Box::new(FamoExact(FamoState::new(theta, min, updater, *c)?)),
        MethodSpec::Baseline(m) => Box::new(BaselineState::new(problem, theta, m.clone(), updater, cfg.seed)?),
    })
}

/// Executes the configured run, passing every step to `sink`.
pub fn run_with(
    cfg: &RunConfig,
    front: Option<&ParetoFront>,
    mut sink: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<RunSummary> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let theta = match &cfg.init {
        Some(t) if t.len() != problem.dim() => {
            return Err(Error::Config(format!("init has {} entries, problem has {}", t.len(), problem.dim())))
        }
        Some(t) => t.clone(),
        None => vec![0.0; problem.dim()],
    };
    let counted = Counted::new(&*problem);
    let mut opt = build_optimizer(cfg, &*problem, theta)?;
    let mut failure = None;
    let mut total_ns = 0u64;
    let mut steps_completed = 0;
    for step in 0..cfg.steps {
        let before = counted.counts();
        let start = Instant::now();
        let result = opt.step(&counted);
        let ns = start.elapsed().as_nanos() as u64;
        let used = counted.counts() - before;
        let info = match result {
            Ok(info) => info,
            Err(e) => {
                log::error!("{} failed at step {step}: {e}", opt.name());
                failure = Some(format!("step {step}: {e}"));
                break;
            }
        };
        total_ns += ns;
        steps_completed += 1;
        sink(&StepRecord {
            step,
            losses: problem.losses(opt.theta()),
            weights: info.weights,
            d_norm: info.d_norm,
            grad_evals: used.gradient,
            loss_evals: used.loss,
            t_ns: if cfg.record_time { ns } else { 0 },
        })?;
    }
    let final_losses = problem.losses(opt.theta());
    let converged = final_losses
        .iter()
        .zip(problem.min_losses())
        .map(|(l, m)| l - m <= 1e-3 * m.abs().max(1.0))
        .collect();
    let (pareto_proximity, reached_front) = match front {
        Some(f) if cfg.problem.is_toy() => {
            let d = f.proximity([final_losses[0], final_losses[1]]);
            (Some(d), Some(d <= f.threshold()))
        }
        _ => (None, None),
    };
    let totals = counted.counts();
    Ok(RunSummary {
        problem: problem.name().to_string(),
        method: cfg.method.label(),
        steps_completed,
        final_theta: opt.theta().to_vec(),
        final_losses,
        total_grad_evals: totals.gradient,
        total_loss_evals: totals.loss,
        total_ns: if cfg.record_time { total_ns } else { 0 },
        failure,
        converged,
        pareto_proximity,
        reached_front,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<output>.jsonl` and `<output>.summary.json` when `output` is
/// set. Toy runs are scored against the cached front if one is configured.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let front = match &cfg.pareto_front {
        Some(p) if cfg.problem.is_toy() => Some(ParetoFront::load(p)?),
        _ => None,
    };
    let Some(prefix) = &cfg.output else {
        return run_with(cfg, front.as_ref(), |_| Ok(()));
    };
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(with_suffix(prefix, ".jsonl"))?);
    let summary = run_with(cfg, front.as_ref(), |rec| {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
        Ok(())
    })?;
    out.flush()?;
    std::fs::write(with_suffix(prefix, ".summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Runs and keeps every step in memory.
pub fn collect(cfg: &RunConfig, front: Option<&ParetoFront>) -> Result<(Vec<StepRecord>, RunSummary)> {
    let mut steps = Vec::new();
    let summary = run_with(cfg, front, |r| {
        steps.push(r.clone());
        Ok(())
    })?;
    Ok((steps, summary))
}
