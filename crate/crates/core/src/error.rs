// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Crate-wide error type and process exit-code mapping.

use thiserror::Error;

/// Errors produced by the simulator, the measure pipelines and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or state violates a structural invariant (hermiticity,
    /// isometry, trace normalization, ...).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Dimension or index mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Bad run configuration (unknown key, out-of-range value, wrong layout).
    #[error("configuration error: {0}")]
    Config(String),

    /// Request exceeds a hard resource guard (dense method size limits).
    #[error("resource limit: {0}")]
    Resource(String),

    /// Numerical failure: degenerate determinant, integration drift,
    /// loss of isometry beyond repair.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A singular-state request: the operation is undefined at (or too close
    /// to) a pure mode; callers should use the determinant-ratio paths.
    #[error("singular state: {0}")]
    SingularState(String),

    /// A measurement outcome with (numerically) zero probability.
    #[error("impossible outcome: {0}")]
    ImpossibleOutcome(String),

    /// A fit or report was requested with too few usable data points.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 0 ok, 1 io, 2 usage, 3 resource,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Serialize(_) => 1,
            Error::Config(_) => 2,
            Error::Resource(_) => 3,
            Error::InvalidState(_)
            | Error::Shape(_)
            | Error::Numerical(_)
            | Error::SingularState(_)
            | Error::ImpossibleOutcome(_)
            | Error::InsufficientData(_) => 4,
        }
    }
}
