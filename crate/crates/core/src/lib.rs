//! Localization estimation of high-dimensional covariance matrices for tensor
//! data observed on d-order lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`] maps between linear indices and lattice coordinates and
//!   computes absolute coordinate differences.
//! * [`localfn`] holds the localization functions, their quasi-volume and
//!   Vitali-variation diagnostics and the multi-banding weight decomposition.
//! * [`estimator`] implements the sample covariance, localization,
//!   multi-banding, the one-dimensional banding/tapering comparators, the
//!   separable Kronecker comparator, PSD repair and precision estimation.
//! * [`model`] provides covariance decay functions, optimal scaling, the
//!   synthetic covariance settings and Gaussian / Student-t samplers.
//! * [`metrics`] computes matrix norms and reconstruction errors.
//! * [`selection`] picks scaling vectors by repeated sample splitting.
//! * [`assimilate`] runs the 3DVar reconstruction benchmark.
//! * [`experiment`] contains the Monte Carlo drivers behind the CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod assimilate;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod io;
pub mod lattice;
pub mod localfn;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use estimator::{CovMatrix, DataMatrix};
pub use lattice::{CoordDelta, LatticeSpec, ScalingVector};
pub use localfn::LocalizationFunction;
