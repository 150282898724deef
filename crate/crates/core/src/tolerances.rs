//! Numerical thresholds shared by every module.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// A pivot is treated as zero when `|u_kk| <= pivot * max|A_ij|`.
    pub pivot: f64,
    /// Power iteration stops once the Collatz-Wielandt bracket is this tight (relative).
    pub spectral: f64,
    pub spectral_max_iter: usize,
    /// Iterations between stagnation checks in power iteration.
    pub spectral_stall_window: usize,
    /// `|rho(R) - 1| <= critical` classifies as critical.
    pub critical: f64,
    /// Allowed deviation from `a + B(e (x) e) = e`.
    pub validation: f64,
    /// Rounding slack for entries produced by linear solves (just below 0 or above 1).
    pub entry_clamp: f64,
    /// Slack under which a negative rate-derived entry is still accepted.
    pub negative_rate: f64,
    /// Discriminants in `[-discriminant, 0)` are clamped to zero.
    pub discriminant: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pivot: 1e-14,
            spectral: 1e-12,
            spectral_max_iter: 1_000_000,
            spectral_stall_window: 1_000,
            critical: 1e-12,
            validation: 1e-12,
            entry_clamp: 1e-15,
            negative_rate: 1e-12,
            discriminant: 1e-15,
            solver_tol: 1e-14,
            solver_max_iter: 100,
        }
    }
}
