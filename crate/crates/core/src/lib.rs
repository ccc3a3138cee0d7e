//! Exact-arithmetic toolkit for p-adic matrix exponentials, Weil-style
//! heights, and index lower bounds for lattice orbits.
//!
//! Everything computes with exact rationals. Floating point appears in one
//! place only (the Siegel domination fit), and there every inequality is
//! decided by an exact comparison first and merely reported as a float.

pub mod exactnum;
pub mod lattice_heights;
pub mod matrix;
pub mod orbit_index;
pub mod padic;
pub mod siegel;

pub use exactnum::{Rational, Valuation};
pub use matrix::RatMatrix;

/// Crate-wide error type. Operations distinguish contract violations
/// (bad dimensions, non-prime p) from mathematical refusals (series
/// divergence, criterion failures), which carry the offending data.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0}: input must be nonzero")]
    ZeroInput(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular")]
    Singular,
    #[error("automorphism is not unimodular: det = {0}")]
    NotUnimodular(Rational),
    #[error("matrix entries are not integral")]
    NotIntegral,
    #[error("matrix is not nilpotent")]
    NotNilpotent,
    #[error("exp series diverges: characteristic coefficient shift k = {k}, need dim < k(p-1)")]
    ExpDiverges { k: i64 },
    #[error("log criterion fails: characteristic coefficient shift k = {k}, need k >= 1")]
    LogCriterion { k: i64 },
    #[error("precision {0} out of supported range")]
    Precision(u32),
    #[error("shift {shift} cannot represent an entry of valuation {valuation}")]
    Shift { shift: u32, valuation: i64 },
    #[error("norm bound violated ({which}): measured {measured}, bound {bound}")]
    NormBound {
        which: &'static str,
        measured: Rational,
        bound: Rational,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad experiment: {0}")]
    Experiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
