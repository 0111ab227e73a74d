//! Two-photon polarization Bell-parameter toolkit.
//!
//! Simulates polarization-entangled photon pairs, measures them with the
//! standard four-setting CHSH protocol and with a two-setting
//! parallel-polarizer protocol, verifies at the operator level that both
//! protocols measure the same quantity, and quantifies the statistical
//! error of each estimator by Monte Carlo.
//!
//! Module layout:
//!
//! - [`qpol`]: dense complex linear algebra on the 4-dimensional two-photon
//!   polarization space (states, operators, density matrices).
//! - [`bell`]: Bell states in the HV and 45-degree (ST) bases, correlation
//!   and Bell operators, coincidence projectors, and the sign-pattern
//!   classifier that discriminates the four Bell states.
//! - [`measure`]: outcome probabilities, seeded multinomial coincidence
//!   sampling, and the three Bell-parameter estimators (CHSH, simplified,
//!   fringe visibility).
//! - [`stats`]: closed-form variance predictions, a first-order propagation
//!   oracle, empirical variances from repeated trials, Werner states, and
//!   the estimator-variance crossover scan.
//! - [`counts`], [`report`], [`run`]: coincidence-count file ingestion,
//!   report emission, and experiment orchestration behind the CLI.
//!
//! All randomness is drawn from named ChaCha8 streams derived from a single
//! experiment seed (see [`rng`]), so every result is reproducible bit for
//! bit, including under the parallel trial runner.

#![forbid(unsafe_code)]

pub mod bell;
pub mod counts;
pub mod measure;
pub mod qpol;
pub mod report;
pub mod rng;
pub mod run;
pub mod stats;

use thiserror::Error;

/// Errors for state construction, estimation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("density matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("density matrix trace is not 1 (got {0})")]
    TraceNotOne(f64),

    #[error("density matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),

    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("observable is not Hermitian (max deviation {0:.3e})")]
    ObservableNotHermitian(f64),

    #[error("usage: {0}")]
    Usage(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
