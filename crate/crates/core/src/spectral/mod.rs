//! Normalized-cut spectral grouping of input series.
//!
//! The similarity graph is built from absolute Pearson correlations. The
//! random-walk Laplacian eigenproblem is solved through the symmetric form
//! `D^{-1/2} L D^{-1/2}` with a cyclic Jacobi solver, and the embedded rows
//! are grouped with k-means.

mod assignment;
mod cluster;
mod eigen;
mod export;
mod graph;
mod kmeans;

pub use assignment::GroupAssignment;
pub use cluster::{brute_force_min_ncut, spectral_cluster, spectral_embedding, SpectralEmbedding, BRUTE_FORCE_LIMIT};
pub use eigen::{sym_eig, sym_eig_with, EigConfig, SymEigen};
pub use export::{read_assignment, write_assignment, write_embedding};
pub use graph::{cut_value, laplacians, ncut_value, pearson, similarity_from_series, Laplacians, SimilarityGraph};
pub use kmeans::kmeans;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("series `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("need at least {need} series of at least 2 points, got {got}")]
    TooFewSeries { need: usize, got: usize },
    #[error("series `{name}` has {len} points, expected {expected}")]
    LengthMismatch { name: String, len: usize, expected: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix must be square, got shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("invalid weight at ({row}, {col}): {value}")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),
    #[error("group {0} has zero volume")]
    ZeroVolume(usize),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NonConvergence(usize),
    #[error("matrix order {n} exceeds the dense limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("invalid group count {k} for {n} items")]
    InvalidK { k: usize, n: usize },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
