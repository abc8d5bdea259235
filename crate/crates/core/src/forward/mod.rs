//! Forward problem: the mild solution of the Lippmann–Schwinger equation,
//! far-field patterns, and batched far-field synthesis.

mod dataset;
mod solver;
mod synthesis;

use serde::{Deserialize, Serialize};

use crate::domain::norm3;
use crate::error::{Error, Result};
use crate::greens::ResolventMethod;

pub use dataset::{DatasetConfig, FarFieldDataset, FarFieldIndex, FarFieldRecord, DATASET_MAGIC, RECORD_BYTES};
pub use solver::{
    born_components, far_field, solve_mild, FarFieldValue, ForwardModel, ForwardSolveResult, ProbeSolution,
    WaveSolver,
};
pub use synthesis::{synthesize_dataset, synthesize_requests, FarFieldRequest, SynthesisStrategy};

/// Passive (`α = 0`) or active (`α = 1`) measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Passive,
    Active,
}

/// Incident plane wave `α e^{ik x·d}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentConfig {
    alpha: u8,
    d: [f64; 3],
}

impl IncidentConfig {
    pub fn passive() -> Self {
        IncidentConfig { alpha: 0, d: [1.0, 0.0, 0.0] }
    }

    pub fn active(d: [f64; 3]) -> Result<Self> {
        check_unit(d, "incident direction")?;
        Ok(IncidentConfig { alpha: 1, d })
    }

    pub fn alpha(&self) -> u8 {
        self.alpha
    }

    pub fn is_active(&self) -> bool {
        self.alpha == 1
    }

    pub fn direction(&self) -> Option<[f64; 3]> {
        self.is_active().then_some(self.d)
    }
}

pub(crate) fn check_unit(v: [f64; 3], what: &str) -> Result<()> {
    let n = norm3(v);
    if (n - 1.0).abs() <= 1e-12 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} {v:?} is not a unit vector (norm {n})")))
    }
}

/// Truncation and gating parameters shared by every solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop once the relative `L²(D)` update of the series drops below this.
    pub tol: f64,
    /// Maximum number of series terms, counting the zeroth.
    pub max_terms: usize,
    pub contraction_trials: usize,
    pub contraction_seed: u64,
    pub method: ResolventMethod,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_terms: 25,
            contraction_trials: 1,
            contraction_seed: 0,
            method: ResolventMethod::FastConvolution,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidArgument("max_terms must be at least 1".into()));
        }
        Ok(())
    }
}
