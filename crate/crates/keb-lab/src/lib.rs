//! keb-lab: numerical analysis of k-entanglement-breaking channels.
//!
//! A desk-scale toolkit for linear maps on matrix algebras. It covers
//! channel representations (Kraus lists, Choi matrices, parametric
//! families), Schmidt decompositions and Schmidt number bounds,
//! k-positivity and complete positivity certificates, separability
//! certification and refutation, entanglement-breaking order analysis
//! with exact thresholds for the built-in families, twirling onto the
//! span of {I, |Omega><Omega|, Delta}, and weak majorization relations
//! between channel spectra.
//!
//! All matrices are dense and small (factor dimension <= 6 by default),
//! all randomness is seeded, and every verdict carries machine-checkable
//! evidence.

pub mod channels;
pub mod cli;
pub mod core_linalg;
pub mod keb;
pub mod majorization;
pub mod positivity;
pub mod report;
pub mod schmidt;
pub mod separability;
pub mod twirl;

pub use core_linalg::{BipartiteOperator, CMatrix, CVector, Side, ToleranceProfile};
pub use positivity::{Certificate, Evidence, Verdict};

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix not Hermitian: deviation {deviation:.3e} exceeds {eps_herm:.3e}")]
    NotHermitian { deviation: f64, eps_herm: f64 },
    #[error("decomposition residual gate failed: {0}")]
    ResidualGate(String),
    #[error("factor dimension {0} exceeds configured maximum {1}")]
    DimensionCap(usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
