use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a minibatch's per-row output gradients are combined before backprop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradReduction {
    /// Divide by the batch size.
    #[default]
    Mean,
    /// Use the summed gradient as is.
    Sum,
}

impl GradReduction {
    pub fn factor(self, batch_len: usize) -> f64 {
        match self {
            GradReduction::Mean => 1.0 / batch_len.max(1) as f64,
            GradReduction::Sum => 1.0,
        }
    }
}

/// Loss weights, code length and optimisation schedule.
///
/// `Default` gives τ = 10, γ = 100, η = 10, 64-sample batches and a learning
/// rate decaying from 1e-4 to 1e-6 over 150 outer iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Weight of the pairwise likelihood term.
    pub tau: f64,
    /// Weight of the code-matching (quantization) terms.
    pub gamma: f64,
    /// Weight of the bit-balance term.
    pub eta: f64,
    /// Code length in bits.
    pub k: usize,
    pub batch: usize,
    /// Batch mean by default; the plain sum saturates `tanh` within a few
    /// steps at the default learning rate.
    pub grad_reduction: GradReduction,
    pub outer_iters: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Column sweeps per B-step.
    pub b_sweeps: usize,
    pub seed: u64,
    /// Relative change of the total loss under which an iteration counts as converged.
    pub early_stop_tol: f64,
    /// Consecutive converged iterations before stopping; 0 disables early stopping.
    pub early_stop_patience: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            tau: 10.0,
            gamma: 100.0,
            eta: 10.0,
            k: 16,
            batch: 64,
            grad_reduction: GradReduction::Mean,
            outer_iters: 150,
            lr_start: 1e-4,
            lr_end: 1e-6,
            b_sweeps: 1,
            seed: 0,
            early_stop_tol: 1e-4,
            early_stop_patience: 5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("gamma", self.gamma), ("eta", self.eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::Config("outer_iters must be at least 1".into()));
        }
        if self.b_sweeps == 0 {
            return Err(Error::Config("b_sweeps must be at least 1".into()));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_start >= lr_end > 0, got {} -> {}",
                self.lr_start, self.lr_end
            )));
        }
        if !(self.early_stop_tol >= 0.0) {
            return Err(Error::Config("early_stop_tol must be >= 0".into()));
        }
        Ok(())
    }
}
