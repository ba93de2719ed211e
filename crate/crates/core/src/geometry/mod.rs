//! Cross-lingual alignability of prototype geometries.

mod baseline;
mod procrustes;
mod rsa;
mod stats;

use alloc::string::String;
use thiserror::Error;

pub use baseline::{
    alignability_report, baseline_configurations, baseline_distribution, AlignabilityReport, BaselineComparison,
    BaselineKind, Metric, ReportConfig, DEFAULT_TRIALS,
};
pub use procrustes::{procrustes_alignability, procrustes_fit, r2_uniform, standardize};
pub use rsa::{dissimilarity_matrix, rsa, rsa_points, DissimilarityMatrix};
pub use stats::{
    average_ranks, pearson, spearman, wilcoxon_from_differences, wilcoxon_signed_rank, Alternative, StatTestResult,
    TestMethod, EXACT_MAX_N,
};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 values for a rank correlation, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: zero rank variance")]
    UndefinedCorrelation,
    #[error("too few concepts for comparison: {0}")]
    TooFewConcepts(usize),
    #[error("concept lists differ")]
    ConceptOrder,
    #[error("degenerate configuration: all points coincide")]
    Degenerate,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("concept {0:?} has no samples")]
    EmptyConcept(String),
}
