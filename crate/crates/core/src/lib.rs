//! Limit theory, exact oracles and Monte Carlo estimators for linear
//! eigenvalue statistics of random matrices whose entry moments grow with the
//! matrix size.
//!
//! The crate is organised bottom-up:
//!
//! - [`moment_model`]: limit constants `C_{k,l}`, `C_k` and the sparse atomic laws realizing them.
//! - [`partitions`]: set, pair, cross and integer partitions.
//! - [`trace_graph`]: the multigraphs `T_pi`, their gluings and tree classification.
//! - [`limits`]: exact limiting trace moments and fluctuation covariances.
//! - [`ensembles`]: seeded samplers, the centrosymmetric block reduction and circulant spectra.
//! - [`estimator`]: empirical traces, fluctuation statistics and comparison reports.
//! - [`oracle`]: exact finite-N expectations used as ground truth.

pub mod ensembles;
pub mod error;
pub mod estimator;
pub mod moment_model;
pub mod numeric;
pub mod oracle;
pub mod partitions;
pub mod limits;
pub mod trace_graph;

pub use error::{Error, Result};
