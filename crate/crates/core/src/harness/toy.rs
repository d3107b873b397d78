use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{Method, DEFAULT_C};
use crate::error::Result;
use crate::famo::FamoConfig;
use crate::problems::TOY_INITS;

use super::config::{MethodSpec, RunConfig, TOY_STEPS};
use super::pareto::ParetoFront;
use super::run::{run, run_with, RunSummary};

/// Methods compared on the toy.
pub fn toy_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::Famo(FamoConfig::default()),
        MethodSpec::Baseline(Method::Ls),
        MethodSpec::Baseline(Method::Mgda),
        MethodSpec::Baseline(Method::Pcgrad),
        MethodSpec::Baseline(Method::Cagrad { c: DEFAULT_C }),
        MethodSpec::Baseline(Method::ImtlG),
        MethodSpec::Baseline(serde_json::from_str(r#"{"name":"nash_mtl"}"#).expect("defaults")),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyRun {
    pub method: String,
    pub init: [f64; 2],
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodTotals {
    pub method: String,
    /// Inits from which the front was reached.
    pub reached: usize,
    pub total_ns: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySummary {
    pub steps: u64,
    pub threshold: f64,
    pub runs: Vec<ToyRun>,
    pub totals: Vec<MethodTotals>,
}

impl ToySummary {
    pub fn totals_for(&self, method: &str) -> Option<&MethodTotals> {
        self.totals.iter().find(|t| t.method == method)
    }

    /// Rows of `method, init_x, init_y, l1, l2, proximity, reached`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "init_x", "init_y", "l1", "l2", "proximity", "reached"])?;
        for r in &self.runs {
            let s = &r.summary;
            out.write_record([
                r.method.clone(),
                r.init[0].to_string(),
                r.init[1].to_string(),
                s.final_losses[0].to_string(),
                s.final_losses[1].to_string(),
                s.pareto_proximity.unwrap_or(f64::NAN).to_string(),
                s.reached_front.unwrap_or(false).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Every method from every init. Trajectories go to `out_dir` as
/// `<method>_<i>.jsonl` when given. Runs are serial so wall times compare.
pub fn toy_experiment(
    methods: &[MethodSpec],
    steps: u64,
    front: &ParetoFront,
    out_dir: Option<&Path>,
) -> Result<ToySummary> {
    let mut runs = Vec::new();
    let mut totals = Vec::new();
    for method in methods {
        let mut t = MethodTotals { method: method.label(), reached: 0, total_ns: 0 };
        for (i, init) in TOY_INITS.iter().enumerate() {
            let mut cfg = RunConfig::toy(method.clone(), *init);
            cfg.steps = steps;
            let summary = match out_dir {
                Some(dir) => {
                    cfg.output = Some(dir.join(format!("{}_{i}", t.method)));
                    let s = run(&cfg)?;
                    // `run` only scores against a front on disk.
                    rescore(s, front)
                }
                None => run_with(&cfg, Some(front), |_| Ok(()))?,
            };
            t.total_ns += summary.total_ns;
            t.reached += usize::from(summary.reached_front == Some(true));
            runs.push(ToyRun { method: t.method.clone(), init: *init, summary });
        }
        totals.push(t);
    }
    Ok(ToySummary { steps, threshold: front.threshold(), runs, totals })
}

fn rescore(mut s: RunSummary, front: &ParetoFront) -> RunSummary {
    let d = front.proximity([s.final_losses[0], s.final_losses[1]]);
    s.pareto_proximity = Some(d);
    s.reached_front = Some(d <= front.threshold());
    s
}

/// `toy_experiment` with the default methods and budget.
pub fn toy_experiment_default(front: &ParetoFront, out_dir: Option<&Path>) -> Result<ToySummary> {
    toy_experiment(&toy_methods(), TOY_STEPS, front, out_dir)
}
