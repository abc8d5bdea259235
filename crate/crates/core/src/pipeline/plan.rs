//! Measurement plans: the exact far-field samples an experiment needs.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentMode};
use crate::domain::volume::write_atomic;
use crate::error::{Error, Result};
use crate::forward::FarFieldRequest;
use crate::inverse::{fibonacci_sphere, potential_requests, variance_requests, EnsembleSpec};

pub const PLAN_FORMAT: &str = "RANDSCAT-PLAN";
pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub format: String,
    pub version: u32,
    pub mode: ExperimentMode,
    pub requests: Vec<FarFieldRequest>,
}

fn cmp_dir(a: &Option<[f64; 3]>, b: &Option<[f64; 3]>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.iter().zip(y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal),
    }
}

fn request_cmp(a: &FarFieldRequest, b: &FarFieldRequest) -> Ordering {
    a.seed
        .cmp(&b.seed)
        .then(a.k.total_cmp(&b.k))
        .then(cmp_dir(&Some(a.xhat), &Some(b.xhat)))
        .then(cmp_dir(&a.d, &b.d))
}

impl MeasurementPlan {
    /// Sorts and drops exact duplicates.
    pub fn new(mode: ExperimentMode, mut requests: Vec<FarFieldRequest>) -> Self {
        requests.sort_by(request_cmp);
        requests.dedup_by(|a, b| request_cmp(a, b) == Ordering::Equal);
        MeasurementPlan { format: PLAN_FORMAT.into(), version: PLAN_VERSION, mode, requests }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: MeasurementPlan = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if plan.format != PLAN_FORMAT || plan.version != PLAN_VERSION {
            return Err(Error::format(path, format!("unsupported plan {} v{}", plan.format, plan.version)));
        }
        Ok(plan)
    }
}

/// Materializes the requests an experiment needs.
pub fn plan_measurements(config: &ExperimentConfig) -> Result<MeasurementPlan> {
    config.check()?;
    let requests = match config.mode {
        ExperimentMode::Variance => {
            let v = config.variance.as_ref().expect("checked");
            let lags = v.lags.build()?;
            let mut reqs = variance_requests(lags.directions(), lags.radii(), &v.schedule, Some(v.seed));
            if let Some(st) = &v.stability {
                for seed in st.seed_start..st.seed_start + st.seeds {
                    reqs.extend(variance_requests(&[st.xhat], &[st.tau], &v.schedule, Some(seed)));
                }
            }
            reqs
        }
        ExperimentMode::Potential => {
            let p = config.potential.as_ref().expect("checked");
            let mut points = match &p.p_grid {
                Some(g) => g.build()?.points(),
                None => Vec::new(),
            };
            points.extend(p.points.iter().copied());
            potential_requests(&points, &p.k_list, p.seed)?
        }
        ExperimentMode::Source => {
            let s = config.source.as_ref().expect("checked");
            let polar = s.polar.build()?;
            EnsembleSpec::from_polar((s.seed_start..s.seed_start + s.seeds).collect(), s.d, &polar)?.requests()
        }
        ExperimentMode::Validate => {
            let v = config.validate.as_ref().expect("checked");
            let dirs = fibonacci_sphere(v.directions);
            let mut reqs = Vec::new();
            for &k in &v.k_list {
                for &xhat in &dirs {
                    reqs.push(FarFieldRequest { k, xhat, d: Some(v.d), seed: v.seed });
                }
            }
            reqs
        }
    };
    Ok(MeasurementPlan::new(config.mode, requests))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::band_nodes;
    use std::collections::BTreeSet;

    fn variance_config(taus: &str, bands: &str, dirs: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
version = 1
mode = "variance"
[scene]
grid = {{ origin = [-0.5, -0.5, -0.5], extent = [1.0, 1.0, 1.0], n = [12, 12, 12] }}
[variance]
seed = 3
schedule = {{ bands = {bands}, n_k = 8 }}
lags = {{ radii = {taus}, {dirs} }}
"#
        ))
        .unwrap()
    }

    #[test]
    fn variance_plan_matches_set_arithmetic() {
        let cfg = variance_config("[0.5, 1.0, 1.5]", "[10.0, 20.0]", "direction_list = [[0.0, 0.0, 1.0]]");
        let plan = plan_measurements(&cfg).unwrap();
        let mut oracle = BTreeSet::new();
        for big_k in [10.0, 20.0] {
            for k in band_nodes(big_k, 8) {
                for tau in [0.0, 0.5, 1.0, 1.5] {
                    oracle.insert(((k + tau) * 1e9).round() as i64);
                }
            }
        }
        let got: BTreeSet<i64> = plan.requests.iter().map(|r| (r.k * 1e9).round() as i64).collect();
        assert_eq!(got, oracle);
        assert_eq!(plan.requests.len(), oracle.len());
        assert!(plan.requests.iter().all(|r| r.d.is_none() && r.seed == Some(3)));
    }

    #[test]
    fn plans_are_byte_identical_across_runs() {
        let cfg = variance_config("[0.0, 2.0]", "[4.0, 8.0]", "directions = 3");
        assert_eq!(plan_measurements(&cfg).unwrap().to_bytes().unwrap(), plan_measurements(&cfg).unwrap().to_bytes().unwrap());
    }

    #[test]
    fn empty_lag_grid_is_rejected() {
        let text = r#"
version = 1
mode = "variance"
[scene]
grid = { origin = [-0.5, -0.5, -0.5], extent = [1.0, 1.0, 1.0], n = [12, 12, 12] }
[variance]
seed = 3
schedule = { bands = [4.0], n_k = 8 }
lags = { radii = [], directions = 3 }
"#;
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn potential_plan_uses_fixed_axes_at_zero_frequency() {
        let text = r#"
version = 1
mode = "potential"
[scene]
grid = { origin = [-0.5, -0.5, -0.5], extent = [1.0, 1.0, 1.0], n = [12, 12, 12] }
[potential]
seed = 1
k_list = [10.0]
points = [[0.0, 0.0, 0.0]]
"#;
        let plan = plan_measurements(&ExperimentConfig::from_toml_str(text).unwrap()).unwrap();
        assert_eq!(plan.requests.len(), 2);
        assert!(plan.requests.iter().all(|r| r.xhat == [1.0, 0.0, 0.0]));
        let ds: BTreeSet<_> = plan.requests.iter().map(|r| format!("{:?}", r.d)).collect();
        assert!(ds.contains(&format!("{:?}", Some([1.0, 0.0, 0.0]))));
        assert!(ds.contains(&format!("{:?}", Some([0.0, 1.0, 0.0]))));
    }
}
