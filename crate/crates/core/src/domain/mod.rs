//! Grids, gridded media and fields, the Fourier convention, and norms.

mod field;
pub mod fourier;
mod grid;
mod norms;
mod scene;
pub mod volume;

pub use field::{FieldKind, FieldOnGrid};
pub use fourier::{fourier_transform_hat, fourier_transform_real, FrequencyGrid, PlaneWave, FOURIER_NORM};
pub use grid::{japanese_bracket, GridSpec, DOMAIN_PADDING, MIN_VOXELS};
pub(crate) use grid::{norm3, scale3};
pub use norms::{l2_norm_on_support, weighted_norm, WeightedNormSpec};
pub use scene::{MediumScene, Phantom, SceneBuilder, SCENE_FORMAT, SCENE_VERSION};
