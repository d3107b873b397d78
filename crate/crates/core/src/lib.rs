pub mod dual;
pub mod error;
pub mod jacobian;
pub mod moment;
pub mod problems;
pub mod simplex;
pub mod vecops;
pub mod famo;
pub mod optimizer;
pub mod baselines;
pub mod metrics;
pub mod alloc_track;
pub mod harness;
