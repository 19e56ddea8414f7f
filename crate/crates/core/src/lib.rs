//! Wasserstein measure coresets.
//!
//! A measure coreset is a small uniform point set `x_1..x_n` whose empirical
//! measure is close, in `W_1`, `W_2` or Sinkhorn divergence, to a data
//! distribution that is only reachable through samples. Construction is
//! online: each outer iteration draws a minibatch, refreshes the Kantorovich
//! dual weights of the semi-discrete problem, and moves the sites using the
//! resulting power-cell assignment.
//!
//! Module map:
//!
//! - [`measures`]: sample access to data distributions (datasets, streams,
//!   synthetic generators, pushforwards) and CSV ingestion.
//! - [`semidiscrete`]: power-cell assignment, the stochastic dual objective
//!   and its averaged ascent, Monte Carlo `W_p` estimates.
//! - [`solver`]: the outer site updates (`W_1` gradient, `W_2` fixed point,
//!   Sinkhorn divergence) and the online construction loop.
//! - [`eval`]: exact discrete transport, MMD, coreset conditions and the
//!   downstream tasks with uniform and kernel-herding baselines.
//! - [`experiment`]: the method × size × seed grid used to compare summaries.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod measures;
pub mod points;
pub mod rng;
pub mod semidiscrete;
pub mod solver;

pub use error::{Error, Result};
pub use points::{Exponent, Point, PointSet};
