//! Extinction probabilities of Markovian binary trees.
//!
//! The extinction probability vector is the minimal nonnegative solution `x*`
//! of the quadratic vector equation `x = a + B(x ⊗ x)`. This crate computes it
//! (Newton and depth iteration), certifies it (a perturbation bound `ξ*`,
//! a condition estimate `κ̃`, a residual error bound `ω*`), and cross-checks it
//! by simulating the branching process.

pub mod cli;
pub mod error;
pub mod error_bound;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod perturbation;
pub mod simulation;
pub mod solvers;
pub mod tolerances;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use model::{Classification, MbtRates, Qve, Regime};
pub use tolerances::Tolerances;
