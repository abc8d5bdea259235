//! Recovery of the variance, potential and source from far-field data.

pub mod eigen;
pub mod gridding;
pub mod potential;
pub mod source;
pub mod variance;

pub use eigen::{dirichlet_eigenpairs, eigen_residual_check, EigenPair};
pub use gridding::{fibonacci_sphere, invert_polar, GriddedInversion, PolarGrid, PolarSamples, MIN_DIRECTIONS};
pub use potential::{
    make_direction_triple, potential_hat_estimate, potential_hat_from_index, potential_requests, reconstruct_potential,
    DirectionTriple, PotentialEstimate, PotentialTrend,
};
pub use source::{
    ensemble_mean_farfield, projection_stderr, recover_source, EnsembleSpec, GateReport, SourceHatEstimate, SourceInverter,
    SourceReconstruction, SourceRecoveryConfig,
};
pub use variance::{
    band_correlogram, band_nodes, component_correlogram, correlogram_scale, reconstruct_sigma2, recover_sigma2,
    recover_sigma2_hat, variance_requests, variance_statistical_stability, BandSchedule, BandTrend, CorrelogramData,
    CorrelogramSample, CorrelogramVariant, Sigma2HatEstimate, StabilityRow, StabilityTable, VarianceReconstruction,
};
