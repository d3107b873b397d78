use crate::error::Result;
use crate::problems::MultiTaskProblem;

/// What one optimizer step reports back to the harness.
#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    /// Task weights used to combine gradients this step.
    pub weights: Vec<f64>,
    /// `‖d‖` of the combined direction.
    pub d_norm: f64,
    /// FAMO's logit gradient `δ`, when applicable.
    pub logit_grad: Option<Vec<f64>>,
}

pub trait Optimizer {
    fn name(&self) -> &str;
    fn theta(&self) -> &[f64];
    /// Advances one step. On error the state is left as it was.
    fn step(&mut self, problem: &dyn MultiTaskProblem) -> Result<StepInfo>;
}
