//! Core library for simulating online least-squares regression against
//! strategic agents.
//!
//! Agents arrive one per round, observe the currently posted linear model,
//! and spend a budget to shift the single feature with the best
//! score-per-cost ratio. The learner refits at epoch boundaries, either by
//! the plain minimum-norm least-squares estimate or with an exploration
//! bump along the unexplored subspace that forces agents to reveal new
//! features. The crate provides:
//!
//! - [`numerics`] — dense linear algebra for rank-deficient least squares,
//!   orthonormal bases, projections, and restricted eigenvalues;
//! - [`scenarios`] — problem instances (true model, degenerate feature
//!   distributions, cost/budget distribution), the four worked examples,
//!   instance constants, and the two retraining thresholds;
//! - [`agents`] — cost sampling, budgeted best response, label realization;
//! - [`learner`] — epoch loop, refits, tie-breaking update, full dynamics;
//! - [`metrics`] — recovery errors, modified-feature tracking, and
//!   empirical concentration-bound checks.
//!
//! All randomness flows through explicitly seeded ChaCha streams; a run is
//! bit-reproducible from its scenario, config, and seed.

pub mod agents;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod numerics;
pub mod scenarios;

pub use error::{Error, Result};
