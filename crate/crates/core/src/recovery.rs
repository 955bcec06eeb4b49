use serde::{Deserialize, Serialize};

/// Output shared by the greedy solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutput {
    /// Coefficient vectors `b_j`, one per basis function, each of signal length.
    pub coeff_vectors: Vec<Vec<f64>>,
    /// Reconstructed signal `sum_j X_j b_j`.
    pub estimate: Vec<f64>,
    /// Rows of the difference operator on which the coefficients jump (0-based).
    pub jump_set: Vec<usize>,
    /// Measurement residual norm after every iteration.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the residual bound could not be met and the least-squares limit was returned.
    pub bound_unmet: bool,
}

impl RecoveryOutput {
    /// Jump rows of a 1D signal as breakpoints (`row + 1`).
    pub fn breakpoints(&self) -> Vec<usize> {
        self.jump_set.iter().map(|r| r + 1).collect()
    }
}
