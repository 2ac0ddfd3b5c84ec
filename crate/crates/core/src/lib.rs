//! Asymptotically optimal sequential rank aggregation from pairwise
//! comparisons.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the Bradley-Terry-Luce comparison model.
//! - [`support`]: prior support geometry and rank regions.
//! - [`estimation`]: likelihood, constrained MLE, GLR and Wald statistics.
//! - [`designsolver`]: the max-min selection design and its mirror-descent solver.
//! - [`policy`]: selection and stopping rules, and single-trial execution.
//! - [`simulation`]: the Monte Carlo study harness.

pub mod error;
pub mod designsolver;
pub mod estimation;
pub mod model;
mod optim;
pub mod policy;
pub mod simulation;
pub mod support;

pub use error::{Error, Result};
pub use optim::PgOptions;
