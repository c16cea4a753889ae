//! Robust low-rank matrix recovery via scaled subgradient methods.
//!
//! The crate factors a rank-`r` target `X = L R^T` and minimizes nonsmooth
//! residual losses (primarily the residual sum of absolute errors) with
//! subgradient steps that are preconditioned by the factor Grams. The scaled
//! iteration converges at a rate independent of the target's condition
//! number and tolerates outlier-corrupted measurements.
//!
//! Modules:
//! - [`linalg`]: dense kernels (thin SVD, partial Frobenius norms, Gram
//!   pseudo-inverses, Rademacher orthonormal bases).
//! - [`stream`]: deterministic seed splitting for reproducible experiments.
//! - [`problem`]: planted ground truths and the noise/outlier observation model.
//! - [`operators`]: matrix-sensing and quadratic-sampling ensembles with dense
//!   and seed-regenerated backends, plus empirical RIP probes.
//! - [`losses`]: l1 / l2 / least-squares values and (sub)gradients.
//! - [`solvers`]: scaled and vanilla subgradient/gradient steps, Polyak and
//!   geometric stepsizes, and the trace-producing run loop.
//! - [`init`]: spectral, truncated spectral, and planted initialization.
//! - [`metrics`]: the preconditioner-aware distance and reporting metrics.
//! - [`bench`]: config-driven experiment runner behind the CLI.

pub mod bench;
pub mod error;
pub mod init;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod operators;
pub mod problem;
pub mod solvers;
pub mod stream;

pub use error::{Error, Result};
pub use linalg::{Mat, Vec64};
pub use solvers::{Algorithm, FactorPair, SolverConfig, SolverTrace, StepSchedule};
