//! Low-rank plus diagonally-dominant decomposition of symmetric matrices
//! (DD-PCA) and the estimators built on top of it.
//!
//! The crate is `no_std` and only needs an allocator. Everything here is a
//! pure function of its inputs; file formats, timing and the command line
//! live in the companion `ddpca-cli` crate.
//!
//! Module map:
//!
//! - [`matrix`], [`linalg`]: dense matrices, symmetric eigensolver, truncation,
//!   singular value thresholding, norms and small dense solvers.
//! - [`projection`]: Euclidean projections onto the diagonally-dominant cones
//!   and the dominance margin.
//! - [`decompose`]: the four decomposition solvers.
//! - [`covariance`]: sample, DD-PCA and POET covariance estimators and the
//!   factor-model precision formula.
//! - [`testing`]: Higher Criticism and its factor-adjusted variants.
//! - [`portfolio`], [`lda`]: downstream consumers of precision estimates.
//! - [`simgen`]: seeded generators for every simulation study and Monte Carlo
//!   aggregation.

#![no_std]
#![warn(rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod covariance;
pub mod decompose;
pub mod error;
pub mod lda;
pub mod linalg;
pub mod lp;
pub mod math;
pub mod matrix;
pub mod portfolio;
pub mod projection;
pub mod simgen;
pub mod testing;

pub use decompose::{Decomposition, Projector, SolverConfig};
pub use error::{Error, Result, Warning};
pub use linalg::EigenSystem;
pub use matrix::{Matrix, SymmetricMatrix};
pub use projection::ConeSpec;
