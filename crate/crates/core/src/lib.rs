//! Reconstruction of the q=1/2 maximum-entropy distribution from redundant,
//! noisy linear constraints.
//!
//! The library recovers an N-component vector of half-power weights
//! `p_n^{1/2}` from M noisy measurements `f_obs_i ~ sum_n p_n^{1/2} f[i,n]`,
//! where M is typically much larger than the number of independent
//! constraints. The pipeline has three stages:
//!
//! 1. [`preselect`] — data-independent elimination of redundant constraints,
//!    ranking candidates by how much of each constraint vector survives
//!    projection onto the already-selected span.
//! 2. [`forward`] — greedy selection of constraints driven by the observed
//!    data, maintaining a biorthogonal dual basis and the Lagrange
//!    multipliers recursively, until the prediction matches the data within
//!    the noise budget.
//! 3. [`backward`] — removal of the least relevant Lagrange multipliers with
//!    exact re-computation of the survivors, while the prediction stays
//!    within a (typically loosened) noise budget.
//!
//! All geometry is taken in a weighted inner product ([`wgeom`]) whose
//! per-datum weights are either uniform or the inverse noise variances.
//!
//! [`distribution`] assembles the final half-power vector from a fitted
//! state, [`synth`] generates the benchmark problems, [`oracle`] holds naive
//! dense reference solvers used by the test suites, and [`cli`] drives the
//! whole pipeline over JSON/CSV files.

use thiserror::Error;

pub mod backward;
pub mod cli;
pub mod distribution;
pub mod forward;
pub mod io;
pub mod model;
pub mod oracle;
pub mod preselect;
pub mod synth;
pub mod wgeom;

pub use distribution::{assemble, entropy_q, HalfDistribution};
pub use forward::{fit_forward, BiorthState, ForwardFit, StopReason, StopRule};
pub use model::{derive, predict, ConstraintSystem, DerivedData};
pub use preselect::{preselect, PreselectReport};
pub use wgeom::{dist2, inner, norm2, DataVector, Measure};

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("constraint index {index} out of range ({len} constraints)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("constraint {index} is already selected")]
    DuplicateIndex { index: usize },

    #[error(
        "constraint {index} is numerically dependent on the selected set \
         (residual ratio {ratio:.3e})"
    )]
    DependentCandidate { index: usize, ratio: f64 },

    #[error("no admissible candidate: all remaining constraints are dependent or excluded")]
    NoAdmissibleCandidate,

    #[error("position {position} out of range for a state with {k} selections")]
    PositionOutOfRange { position: usize, k: usize },

    #[error("Gram matrix is singular or ill-conditioned (pivot ratio {pivot_ratio:.3e})")]
    IllConditionedGram { pivot_ratio: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("schema: {0}")]
    Schema(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
