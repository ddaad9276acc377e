//! Hyperspectral unmixing with a structured LL1 block-term model.
//!
//! A cube `Y` of size `I x J x K` is stored matricized as a `K x IJ` matrix
//! with pixel index `i + j*I`. The model is `Y = C S` where `C` (K x R) holds
//! nonnegative endmember spectra and every column of `S` (R x IJ) lies on the
//! probability simplex, with each abundance map `S_r` (I x J) of low rank or
//! bounded nuclear norm. An optional smoothed `l_q` total-variation term
//! regularizes the maps.
//!
//! ```
//! use ll1_unmix::{datagen, init, projection::{ApSettings, FeasibilityMode}, solver};
//!
//! let truth = datagen::generate_synthetic(12, 12, 10, 2, 3, 0).unwrap();
//! let mode = FeasibilityMode::ExactRank(2);
//! let (c0, s0) = init::initialize(&truth.cube, 3, init::InitSpec::Spa, mode, ApSettings::default()).unwrap();
//! let mut cfg = solver::SolverConfig::new(mode, 3);
//! cfg.max_iters = 50;
//! let out = solver::run(&truth.cube, &c0, &s0, &cfg).unwrap();
//! assert!(out.final_objective() <= out.trace.initial_objective);
//! ```

pub mod config;
pub mod datagen;
pub mod error;
pub mod init;
pub mod io;
mod linalg;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod rng;
pub mod solver;
pub mod tv;

pub use error::{Error, Result};
pub use linalg::{max_eigenvalue_psd, sigma_max_sq};
pub use model::{AbundanceMatrix, EndmemberMatrix, HsiCube, ModelDims};
pub use projection::{ApSettings, FeasibilityMode};
pub use solver::{RunOutput, RunTrace, SolverConfig, Termination};
pub use tv::TvParams;

/// Re-export of the dense matrix type used throughout the API.
pub use faer::Mat;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/model.md")]
mod book_model {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/regularizer.md")]
mod book_regularizer {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/projections.md")]
mod book_projections {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solver.md")]
mod book_solver {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/initialization.md")]
mod book_initialization {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evaluation.md")]
mod book_evaluation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
