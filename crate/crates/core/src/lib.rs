//! Spin-resolved quantum kinetics on a one-dimensional phase space.
//!
//! The crate is layered bottom-up:
//!
//! * [`pauli`] holds the 2×2 Hermitian algebra in Pauli coordinates.
//! * [`environment`] turns a pair potential and a bath description into
//!   mean fields and scattering channels.
//! * [`wigner`] provides the phase-space grid, the Wigner transform pair and
//!   the free-flight operators.
//! * [`collision`] implements the matrix-valued collision operator, its
//!   momentum-relaxing and spin-flip parts, and kernel projections.
//! * [`semiclassics`] covers scaling regimes, limit operators, the kinetic
//!   time stepper, Bloch dynamics and the semiclassical sweep.
//! * [`config`] and [`output`] back the command-line front end.

#![forbid(unsafe_code)]

pub mod collision;
pub mod config;
pub mod environment;
pub mod output;
pub mod pauli;
pub mod semiclassics;
pub mod wigner;

mod fft;

use thiserror::Error;

/// Failures surfaced by the numerical layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: entry ({row},{col}) deviates by {deviation:.3e}")]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("spinorial density is not positive semidefinite at node {node}: n0={n0:.6e}, |n|={polarization:.6e}")]
    NegativeDensity {
        node: usize,
        n0: f64,
        polarization: f64,
    },
    #[error("covariance is not space homogeneous; use the position-space long-range operators instead")]
    NonHomogeneousCovariance,
    #[error("eigen-decomposition failed at momentum node {0}: non-finite input")]
    EigenFailure(usize),
    #[error("time step {dt:.3e} exceeds the stability bound {limit:.3e} set by {term}")]
    StepTooLarge {
        dt: f64,
        limit: f64,
        term: &'static str,
    },
    #[error("inadmissible scaling: {0}")]
    InadmissibleScaling(String),
    #[error("step size underflow at t={t:.6e} (h={h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("resolution insufficient: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
