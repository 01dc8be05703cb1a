//! Numerical tolerance policy shared by every module.
//!
//! Every decision about a dimension (rank of an operator stack, nullspace
//! dimension of a Q-matrix) goes through [`Tolerances::rank_threshold`], so a
//! single knob controls all of them.

use serde::{Deserialize, Serialize};

/// Tolerances used across the analyzer, search and verifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative factor in `max(rows, cols) * sigma_max * rank_rel`.
    pub rank_rel: f64,
    /// Absolute residual for reconstructions, factorizations and node sums.
    pub residual: f64,
    /// Hermiticity check, relative to the largest entry magnitude.
    pub hermitian: f64,
    /// PSD slack, scaled by `max(1, |largest eigenvalue|)`.
    pub psd: f64,
    /// Smallest accepted decomposition scale.
    pub scale: f64,
    /// Nullspace residual `|Q v|` allowed for cone generators.
    pub null_residual: f64,
    /// Support threshold used by the leaf test (relative to the largest entry).
    pub leaf_support: f64,
    /// Largest accepted Gram condition number for dual bases.
    pub max_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: 1e-11,
            residual: 1e-8,
            hermitian: 1e-10,
            psd: 1e-9,
            scale: 1e-9,
            null_residual: 1e-9,
            leaf_support: 1e-9,
            max_condition: 1e12,
        }
    }
}

impl Tolerances {
    /// Singular-value threshold below which a direction counts as null.
    pub fn rank_threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        rows.max(cols) as f64 * sigma_max * self.rank_rel
    }

    /// Singular values this close to the threshold (within a factor of 10 on
    /// either side) make a rank decision marginal.
    pub fn is_marginal(&self, sigma: f64, threshold: f64) -> bool {
        threshold > 0.0 && sigma > threshold / 10.0 && sigma < threshold * 10.0
    }
}
