//! Versioned experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{GridSpec, MediumScene, Phantom, SceneBuilder};
use crate::error::{Error, Result};
use crate::forward::{SolverSettings, SynthesisStrategy};
use crate::inverse::{fibonacci_sphere, BandSchedule, PolarGrid};

pub const CONFIG_VERSION: u32 = 1;

/// What an experiment recovers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMode {
    Variance,
    Potential,
    Source,
    Validate,
}

/// A scene stored on disk or assembled from phantoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    Path { path: PathBuf },
    Inline {
        grid: GridSpec,
        #[serde(default)]
        sigma: Vec<Phantom>,
        #[serde(default)]
        potential: Vec<Phantom>,
        #[serde(default)]
        source: Vec<Phantom>,
    },
}

impl SceneSource {
    /// Loads or builds the scene; relative paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<MediumScene> {
        match self {
            SceneSource::Path { path } => MediumScene::load(&base.join(path)),
            SceneSource::Inline { grid, sigma, potential, source } => {
                let mut b = SceneBuilder::new(*grid);
                for p in sigma {
                    b = b.sigma(p.clone());
                }
                for p in potential {
                    b = b.potential(p.clone());
                }
                for p in source {
                    b = b.source(p.clone());
                }
                b.build()
            }
        }
    }
}

/// Radii × directions, either listed or generated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Number of Fibonacci directions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_list: Option<Vec<[f64; 3]>>,
}

impl PolarSpec {
    pub fn build(&self) -> Result<PolarGrid> {
        let radii = match (&self.radii, self.p_max, self.count) {
            (Some(r), None, None) => r.clone(),
            (None, Some(p), Some(n)) if n > 0 => (1..=n).map(|i| p * i as f64 / n as f64).collect(),
            _ => return Err(Error::Config("polar grid needs `radii` or both `p_max` and `count`".into())),
        };
        let dirs = match (&self.direction_list, self.directions) {
            (Some(d), None) => d.clone(),
            (None, Some(n)) if n > 0 => fibonacci_sphere(n),
            _ => return Err(Error::Config("polar grid needs `directions` or `direction_list`".into())),
        };
        PolarGrid::new(radii, dirs).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Across-seed stability study at a single lag and direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    pub seeds: u64,
    #[serde(default)]
    pub seed_start: u64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_xhat")]
    pub xhat: [f64; 3],
}

fn default_xhat() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceParams {
    pub seed: u64,
    pub schedule: BandSchedule,
    /// Lags as radii, observation directions as directions.
    pub lags: PolarSpec,
    #[serde(default = "yes")]
    pub reconstruct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub k_list: Vec<f64>,
    /// Polar frequency samples for a gridded reconstruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<PolarSpec>,
    /// Extra frequencies reported without reconstruction.
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub seeds: u64,
    #[serde(default)]
    pub seed_start: u64,
    pub d: [f64; 3],
    pub polar: PolarSpec,
    #[serde(default = "default_eigen_count")]
    pub eigen_count: usize,
    #[serde(default = "default_v_threshold")]
    pub v_threshold: f64,
    #[serde(default = "default_refinements")]
    pub max_refinements: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_eigen_count() -> usize {
    10
}

fn default_v_threshold() -> f64 {
    1.0
}

fn default_refinements() -> usize {
    5
}

fn default_batches() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateParams {
    pub k_list: Vec<f64>,
    #[serde(default = "default_validate_dirs")]
    pub directions: usize,
    #[serde(default = "default_incident")]
    pub d: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Largest accepted relative gap between the two far-field routes.
    #[serde(default = "default_validate_tol")]
    pub tolerance: f64,
}

fn default_validate_dirs() -> usize {
    8
}

fn default_incident() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_validate_tol() -> f64 {
    1e-6
}

/// A complete, replayable experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mode: ExperimentMode,
    pub scene: SceneSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub strategy: SynthesisStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateParams>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml_str(&text)
    }

    /// Structural checks: version, and the parameter group the mode needs.
    pub fn check(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        self.solver.validate()?;
        match self.mode {
            ExperimentMode::Variance => {
                let v = self.variance.as_ref().ok_or_else(|| missing("variance"))?;
                v.lags.build()?;
            }
            ExperimentMode::Potential => {
                let p = self.potential.as_ref().ok_or_else(|| missing("potential"))?;
                if p.k_list.is_empty() {
                    return Err(Error::Config("potential.k_list is empty".into()));
                }
                match &p.p_grid {
                    Some(g) => {
                        g.build()?;
                    }
                    None if p.points.is_empty() => {
                        return Err(Error::Config("potential needs `p_grid` or `points`".into()));
                    }
                    None => {}
                }
            }
            ExperimentMode::Source => {
                let s = self.source.as_ref().ok_or_else(|| missing("source"))?;
                s.polar.build()?;
                if s.seeds < 2 {
                    return Err(Error::Config("source recovery needs at least 2 seeds".into()));
                }
            }
            ExperimentMode::Validate => {
                let v = self.validate.as_ref().ok_or_else(|| missing("validate"))?;
                if v.k_list.is_empty() || v.directions == 0 {
                    return Err(Error::Config("validate needs wave numbers and directions".into()));
                }
            }
        }
        Ok(())
    }

    /// Full validation including referenced files.
    pub fn validate_with(&self, base: &Path) -> Result<MediumScene> {
        self.check()?;
        if let SceneSource::Path { path } = &self.scene {
            let full = base.join(path);
            if !full.exists() {
                return Err(Error::Config(format!("scene file {} does not exist", full.display())));
            }
        }
        self.scene.resolve(base)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

fn missing(group: &str) -> Error {
    Error::Config(format!("mode requires a [{group}] section"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const VARIANCE: &str = r#"
version = 1
mode = "variance"

[scene]
grid = { origin = [-0.5, -0.5, -0.5], extent = [1.0, 1.0, 1.0], n = [12, 12, 12] }
sigma = [{ shape = "ball", center = [0.0, 0.0, 0.0], radius = 0.3, amplitude = 1.0 }]

[variance]
seed = 7
schedule = { bands = [2.0, 4.0], n_k = 8 }
lags = { radii = [0.0, 1.0], directions = 2 }
"#;

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(VARIANCE).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest().unwrap(), again.digest().unwrap());
    }

    #[test]
    fn mode_groups_and_version_are_checked() {
        let no_group = VARIANCE.replace("mode = \"variance\"", "mode = \"source\"");
        assert!(ExperimentConfig::from_toml_str(&no_group).is_err());
        let bad_version = VARIANCE.replace("version = 1", "version = 9");
        assert!(ExperimentConfig::from_toml_str(&bad_version).is_err());
        let unknown = format!("{VARIANCE}\nextra = 3\n");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn missing_scene_file_is_reported() {
        let text = VARIANCE.replace(
            "grid = { origin = [-0.5, -0.5, -0.5], extent = [1.0, 1.0, 1.0], n = [12, 12, 12] }\nsigma = [{ shape = \"ball\", center = [0.0, 0.0, 0.0], radius = 0.3, amplitude = 1.0 }]",
            "path = \"nowhere.json\"",
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.validate_with(Path::new("/nonexistent")), Err(Error::Config(_))));
    }

    #[test]
    fn polar_spec_variants() {
        let g = PolarSpec { p_max: Some(4.0), count: Some(4), directions: Some(16), ..Default::default() }.build().unwrap();
        assert_eq!(g.radii(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(PolarSpec { p_max: Some(4.0), ..Default::default() }.build().is_err());
    }
}
