use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alloc_track::peak_during;
use crate::baselines::{BaselineState, Method, DEFAULT_C};
use crate::error::{Error, Result};
use crate::famo::{FamoConfig, FamoState};
use crate::moment::ParamUpdater;
use crate::optimizer::Optimizer;
use crate::problems::{make_quadratic_bank, Counted, MultiTaskProblem, QuadraticBankSpec};

use super::config::MethodSpec;

pub const TIMING_KS: [usize; 6] = [2, 4, 8, 16, 32, 64];
pub const TIMING_M: usize = 1000;
pub const TIMING_STEPS: usize = 200;
pub const TIMING_WARMUP: usize = 10;
const TIMING_LR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingOptions {
    pub m: usize,
    pub steps: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self { m: TIMING_M, steps: TIMING_STEPS, warmup: TIMING_WARMUP, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub method: String,
    pub k: usize,
    pub median_ns: u64,
    /// Exact per-step count; every timed step must agree.
    pub grad_evals_per_step: u64,
    /// Peak simultaneously live heap bytes during a step, in m-vectors.
    pub live_vectors: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingTable {
    pub m: usize,
    pub cells: Vec<TimingCell>,
}

pub fn timing_methods() -> Vec<MethodSpec> {
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

fn optimizer(method: &MethodSpec, p: &dyn MultiTaskProblem, seed: u64) -> Result<Box<dyn Optimizer>> {
    let theta = vec![0.0; p.dim()];
    let upd = ParamUpdater::sgd(TIMING_LR);
    Ok(match method {
        MethodSpec::Famo(c) => Box::new(FamoState::new(theta, p.min_losses().to_vec(), upd, *c)?),
        MethodSpec::Baseline(m) => Box::new(BaselineState::new(p, theta, m.clone(), upd, seed)?),
        MethodSpec::FamoExact(_) => return Err(Error::Config("famo_exact is not timed".into())),
    })
}

fn median(v: &mut [u64]) -> u64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// One bank with the largest `k`, truncated for the smaller ones. Cells run
/// serially on the calling thread.
pub fn timing_scaling(methods: &[MethodSpec], ks: &[usize], opts: &TimingOptions) -> Result<TimingTable> {
    if ks.iter().any(|&k| k < 2) || opts.steps == 0 {
        return Err(Error::Config("k values must be ≥ 2 and steps ≥ 1".into()));
    }
    let kmax = ks.iter().copied().max().unwrap_or(2);
    let full = make_quadratic_bank(&QuadraticBankSpec::random(kmax, opts.m, opts.seed))?;
    let mut cells = Vec::new();
    for method in methods {
        for &k in ks {
            let bank = full.truncated(k);
            let counted = Counted::new(&bank);
            let mut opt = optimizer(method, &bank, opts.seed)?;
            for _ in 0..opts.warmup {
                opt.step(&counted)?;
            }
            let mut times = Vec::with_capacity(opts.steps);
            let mut peak = Some(0usize);
            let mut per_step = None;
            for _ in 0..opts.steps {
                let before = counted.counts();
                let start = Instant::now();
                let (res, bytes) = peak_during(|| opt.step(&counted));
                times.push(start.elapsed().as_nanos() as u64);
                res?;
                let used = (counted.counts() - before).gradient;
                if *per_step.get_or_insert(used) != used {
                    return Err(Error::Numerical(format!("{} used {used} gradients in one step", method.label())));
                }
                peak = peak.zip(bytes).map(|(a, b)| a.max(b));
            }
            cells.push(TimingCell {
                method: method.label(),
                k,
                median_ns: median(&mut times),
                grad_evals_per_step: per_step.unwrap_or(0),
                live_vectors: peak.map(|b| b / (8 * opts.m)),
            });
        }
    }
    Ok(TimingTable { m: opts.m, cells })
}

impl TimingTable {
    pub fn for_method(&self, method: &str) -> impl Iterator<Item = &TimingCell> + '_ {
        let method = method.to_string();
        self.cells.iter().filter(move |c| c.method == method)
    }

    /// Least-squares slope of median step time (ns) against `k`.
    pub fn slope(&self, method: &str) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.for_method(method).map(|c| (c.k as f64, c.median_ns as f64)).collect();
        least_squares_slope(&pts)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "k", "median_ns", "grad_evals_per_step", "live_vectors"])?;
        for c in &self.cells {
            out.write_record([
                c.method.clone(),
                c.k.to_string(),
                c.median_ns.to_string(),
                c.grad_evals_per_step.to_string(),
                c.live_vectors.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
