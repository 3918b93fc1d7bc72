//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Mesh construction rejected the requested sizes.
    #[error("invalid mesh sizes: {0}")]
    InvalidMesh(String),

    /// A permeability field failed validation or did not match the mesh.
    #[error("invalid permeability field: {0}")]
    InvalidField(String),

    /// Field file parsing failed; position is (line, column) where known.
    #[error("field file parse error at line {line}: {msg}")]
    FieldParse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A direct factorization failed (structurally or numerically singular).
    #[error("singular system in {context}: {detail}")]
    Singular { context: String, detail: String },

    /// Snapshot Gram / spectral mass matrix lost positive definiteness,
    /// which signals a filtering tolerance too loose for the data.
    #[error("spectral mass matrix not positive definite on {context}: {detail}")]
    GramDegenerate { context: String, detail: String },

    /// Pipeline preconditions not met (e.g. no interior skeleton anchors).
    #[error("pipeline error: {0}")]
    Pipeline(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
