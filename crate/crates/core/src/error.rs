//! Error type shared by every stage of the laboratory.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The contraction gate refused the wavenumber (the Neumann series is not
    /// guaranteed to converge).
    #[error("below-threshold wavenumber k = {k}: estimated |R_k V| = {norm:.4} >= 1")]
    BelowThreshold { k: f64, norm: f64 },

    #[error("Neumann series did not reach tol {tol:e} within {terms} terms (last relative update {residual:e})")]
    Truncation { terms: usize, residual: f64, tol: f64 },

    #[error("coverage gap: {} far-field samples missing, first: {}", missing.len(), format_missing(missing))]
    CoverageGap { missing: Vec<MissingSample> },

    #[error("mixed seeds in a single-realization dataset: {0:?}")]
    MixedSeeds(Vec<u64>),

    #[error("insufficient seeds: got {got}, need at least {need}")]
    InsufficientSeeds { got: usize, need: usize },

    #[error("smallness gate failed: |V|_inf = {v_inf:.4e} (threshold {threshold:.4e}): {reason}")]
    SmallnessGate { v_inf: f64, threshold: f64, reason: String },

    #[error("fixed-point refinement diverged; residual history {history:?}")]
    FixedPointDiverged { history: Vec<f64> },

    #[error("eigensolver did not converge after {iterations} iterations (worst relative residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("solve failed for request {request}: {source}")]
    Request {
        request: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A far-field sample requested by an estimator but absent from the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingSample {
    pub k: f64,
    pub xhat: [f64; 3],
    pub d: Option<[f64; 3]>,
    pub seed: Option<u64>,
}

fn format_missing(missing: &[MissingSample]) -> String {
    match missing.first() {
        Some(m) => {
            let mut s = format!(
                "k = {}, xhat = ({:.6}, {:.6}, {:.6})",
                m.k, m.xhat[0], m.xhat[1], m.xhat[2]
            );
            if let Some(d) = m.d {
                s.push_str(&format!(", d = ({:.6}, {:.6}, {:.6})", d[0], d[1], d[2]));
            }
            if let Some(seed) = m.seed {
                s.push_str(&format!(", seed = {seed}"));
            }
            s
        }
        None => "none".to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
