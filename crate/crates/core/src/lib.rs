//! Strong approximation experiments for scalar SDEs `dX = μ(X) dt + dW` with
//! a discontinuous drift, built around the coupled noise pair `(W, W̃)` that
//! agrees with `W` on a coarse grid and resamples independent Brownian
//! bridges in between.

pub mod cli;
pub mod config;
pub mod drift;
pub mod error;
pub mod experiments;
pub mod format;
pub mod gaussian;
pub mod montecarlo;
pub mod noise;
pub mod quadrature;
pub mod solvers;

pub use drift::{ConditionReport, GenericPiece, Piece, PiecewiseLipschitzFn};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, RateFit};
pub use montecarlo::{mc_run, MCEstimate};
pub use noise::{couple, CoupledPathPair, FinePath, Grid, SeedStream};
pub use solvers::{euler, SdeSpec, Trajectory};
