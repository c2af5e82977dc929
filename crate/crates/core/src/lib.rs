//! Orthogonal Matching Pursuit under coherence-based recovery guarantees.
//!
//! The crate is organised around a unit-norm [`SensingMatrix`] and the
//! operations that act on it:
//!
//! - [`coherence`]: worst-case and average coherence, spectral norm, the
//!   strong coherence test, the Welch bound and sign-flip "wiggling".
//! - [`ensembles`]: Gaussian and Alltop–Gabor matrices, sparse test signals.
//! - [`solvers`]: OMP with a fixed iteration count, OMP with a correlation
//!   stopping rule, one-step thresholding and least-squares debiasing.
//! - [`guarantees`]: closed-form signal statistics, sparsity caps,
//!   admissibility conditions and success-probability bounds.
//! - [`diagnostics`]: Monte Carlo estimators for the probabilistic
//!   ingredients of the analysis and per-iteration proof quantities.
//! - [`harness`]: seeded, reproducible Monte Carlo experiments with CSV/JSON
//!   output.
//!
//! Indices are 0-based in the API and 1-based in every file format.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod diagnostics;
pub mod ensembles;
mod error;
pub mod guarantees;
pub mod harness;
pub mod io;
mod linalg;
pub mod model;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{
    synthesize_measurement, CMatrix, CVector, MeasurementInstance, NoiseModel, SensingMatrix,
    SparseSignal, SupportSet, C64,
};
