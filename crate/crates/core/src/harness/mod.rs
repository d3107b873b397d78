//! Run orchestration: configs, trajectories, and the toy, sweep and timing
//! experiments.

pub mod config;
pub mod pareto;
pub mod run;
pub mod sweep;
pub mod timing;
pub mod toy;

pub use config::{MethodSpec, ProblemSpec, RunConfig, UpdaterSpec};
pub use pareto::ParetoFront;
pub use run::{collect, run, run_with, RunSummary, StepRecord};
