//! The medium `(σ, V, f)` sampled on a grid, built-in phantoms, and the scene
//! file format.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{norm3, sub3, GridSpec, DOMAIN_PADDING};
use super::volume::{read_volume, write_atomic, write_volume};
use crate::error::{Error, Result};

pub const SCENE_FORMAT: &str = "randscat-scene";
pub const SCENE_VERSION: u32 = 1;

/// Analytic shapes sampled at voxel midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Phantom {
    /// `amplitude` on the closed ball.
    Ball { center: [f64; 3], radius: f64, amplitude: f64 },
    /// `amplitude · (1 - r²/R²)⁴` inside the ball of radius `R`.
    Bump { center: [f64; 3], radius: f64, amplitude: f64 },
}

impl Phantom {
    pub fn ball(radius: f64, amplitude: f64) -> Self {
        Phantom::Ball { center: [0.0; 3], radius, amplitude }
    }

    pub fn bump(radius: f64, amplitude: f64) -> Self {
        Phantom::Bump { center: [0.0; 3], radius, amplitude }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match *self {
            Phantom::Ball { center, radius, amplitude } => {
                if norm3(sub3(x, center)) <= radius {
                    amplitude
                } else {
                    0.0
                }
            }
            Phantom::Bump { center, radius, amplitude } => {
                let d = sub3(x, center);
                let t = 1.0 - (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (radius * radius);
                if t > 0.0 {
                    amplitude * t.powi(4)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample(&self, grid: &GridSpec) -> Vec<f64> {
        grid.points().map(|x| self.eval(x)).collect()
    }

    /// Fourier transform of the continuum shape (`(2π)^{-3/2}` convention).
    pub fn fourier_hat(&self, p: [f64; 3]) -> num_complex::Complex64 {
        use std::f64::consts::PI;
        let (center, radius, amplitude, kind) = match *self {
            Phantom::Ball { center, radius, amplitude } => (center, radius, amplitude, 0),
            Phantom::Bump { center, radius, amplitude } => (center, radius, amplitude, 1),
        };
        let q = norm3(p);
        let radial = if kind == 0 {
            let qr = q * radius;
            if qr < 1e-4 {
                4.0 * PI * radius.powi(3) / 3.0 * (1.0 - qr * qr / 10.0)
            } else {
                4.0 * PI * (qr.sin() - qr * qr.cos()) / q.powi(3)
            }
        } else {
            // Radial quadrature of 4π ∫ r² sinc(qr) (1 - r²/R²)⁴ dr.
            let n = 400;
            let dr = radius / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let r = (i as f64 + 0.5) * dr;
                let w = (1.0 - r * r / (radius * radius)).powi(4);
                let s = if q * r < 1e-8 { 1.0 } else { (q * r).sin() / (q * r) };
                acc += r * r * w * s;
            }
            4.0 * PI * acc * dr
        };
        let phase = -(p[0] * center[0] + p[1] * center[1] + p[2] * center[2]);
        num_complex::Complex64::from_polar(amplitude * radial * (2.0 * PI).powf(-1.5), phase)
    }
}

/// `σ`, `V` and `f` on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumScene {
    grid: GridSpec,
    sigma: Vec<f64>,
    potential: Vec<f64>,
    source: Vec<f64>,
    support_mask: Vec<bool>,
}

impl MediumScene {
    /// Validates the three volumes and derives the support mask.
    pub fn new(grid: GridSpec, sigma: Vec<f64>, potential: Vec<f64>, source: Vec<f64>) -> Result<Self> {
        for (name, vals) in [("sigma", &sigma), ("potential", &potential), ("source", &source)] {
            if vals.len() != grid.len() {
                return Err(Error::InvalidScene(format!(
                    "{name} has {} values, grid has {} voxels",
                    vals.len(),
                    grid.len()
                )));
            }
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidScene(format!("{name} is not finite at voxel {i}")));
            }
        }
        if let Some(i) = sigma.iter().position(|&s| s < 0.0) {
            return Err(Error::InvalidScene(format!("sigma is negative at voxel {i}")));
        }
        let support_mask: Vec<bool> = (0..grid.len())
            .map(|i| sigma[i] != 0.0 || potential[i] != 0.0 || source[i] != 0.0)
            .collect();
        let domain = grid.domain_mask();
        if let Some(i) = support_mask.iter().zip(&domain).position(|(&s, &d)| s && !d) {
            return Err(Error::InvalidScene(format!(
                "support reaches voxel {:?}, inside the {DOMAIN_PADDING}-voxel padding",
                grid.coords(i)
            )));
        }
        Ok(MediumScene { grid, sigma, potential, source, support_mask })
    }

    pub fn builder(grid: GridSpec) -> SceneBuilder {
        SceneBuilder::new(grid)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn support_mask(&self) -> &[bool] {
        &self.support_mask
    }

    pub fn potential_sup(&self) -> f64 {
        self.potential.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn has_potential(&self) -> bool {
        self.potential.iter().any(|&v| v != 0.0)
    }

    pub fn has_noise(&self) -> bool {
        self.sigma.iter().any(|&v| v != 0.0)
    }

    pub fn has_source(&self) -> bool {
        self.source.iter().any(|&v| v != 0.0)
    }

    /// Diameter of the support (largest distance between supported voxel
    /// centres, plus one voxel diagonal).
    pub fn support_diameter(&self) -> f64 {
        let pts: Vec<[f64; 3]> = (0..self.grid.len())
            .filter(|&i| self.support_mask[i])
            .map(|i| self.grid.point(i))
            .collect();
        if pts.is_empty() {
            return 0.0;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let centre = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]));
        let radius = pts.iter().fold(0.0f64, |m, p| m.max(norm3(sub3(*p, centre))));
        let h = self.grid.spacing();
        2.0 * radius + norm3(h)
    }

    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        MediumScene::new(self.grid, sigma, self.potential.clone(), self.source.clone())
    }

    pub fn with_potential(&self, potential: Vec<f64>) -> Result<Self> {
        MediumScene::new(self.grid, self.sigma.clone(), potential, self.source.clone())
    }

    pub fn with_source(&self, source: Vec<f64>) -> Result<Self> {
        MediumScene::new(self.grid, self.sigma.clone(), self.potential.clone(), source)
    }

    /// SHA-256 over the grid geometry and the three volumes.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(SCENE_FORMAT.as_bytes());
        self.grid.feed(&mut hasher);
        for vals in [&self.sigma, &self.potential, &self.source] {
            for v in vals.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Writes `<stem>.json` plus three raw volumes beside it.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let stem = manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into());
        let dir = manifest_path.parent().unwrap_or(Path::new(""));
        let names = VolumeFiles {
            sigma: format!("{stem}.sigma.f64"),
            potential: format!("{stem}.potential.f64"),
            source: format!("{stem}.source.f64"),
        };
        write_volume(&dir.join(&names.sigma), &self.sigma)?;
        write_volume(&dir.join(&names.potential), &self.potential)?;
        write_volume(&dir.join(&names.source), &self.source)?;
        let manifest = SceneManifest {
            format: SCENE_FORMAT.into(),
            version: SCENE_VERSION,
            grid: self.grid,
            volumes: names,
            digest: Some(self.digest()),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        write_atomic(manifest_path, text.as_bytes())
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: SceneManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(manifest_path, e.to_string()))?;
        if manifest.format != SCENE_FORMAT || manifest.version != SCENE_VERSION {
            return Err(Error::format(
                manifest_path,
                format!("unsupported scene format {} v{}", manifest.format, manifest.version),
            ));
        }
        let dir = manifest_path.parent().unwrap_or(Path::new(""));
        let n = manifest.grid.len();
        let resolve = |name: &str| -> PathBuf { dir.join(name) };
        let scene = MediumScene::new(
            manifest.grid,
            read_volume(&resolve(&manifest.volumes.sigma), n)?,
            read_volume(&resolve(&manifest.volumes.potential), n)?,
            read_volume(&resolve(&manifest.volumes.source), n)?,
        )?;
        if let Some(d) = manifest.digest {
            if d != scene.digest() {
                return Err(Error::Checksum(manifest_path.to_path_buf()));
            }
        }
        Ok(scene)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VolumeFiles {
    sigma: String,
    potential: String,
    source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneManifest {
    format: String,
    version: u32,
    grid: GridSpec,
    volumes: VolumeFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    digest: Option<String>,
}

/// Assembles a scene from phantoms; unspecified fields are zero.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    grid: GridSpec,
    sigma: Vec<Phantom>,
    potential: Vec<Phantom>,
    source: Vec<Phantom>,
}

impl SceneBuilder {
    pub fn new(grid: GridSpec) -> Self {
        SceneBuilder { grid, sigma: Vec::new(), potential: Vec::new(), source: Vec::new() }
    }

    pub fn sigma(mut self, p: Phantom) -> Self {
        self.sigma.push(p);
        self
    }

    pub fn potential(mut self, p: Phantom) -> Self {
        self.potential.push(p);
        self
    }

    pub fn source(mut self, p: Phantom) -> Self {
        self.source.push(p);
        self
    }

    pub fn build(self) -> Result<MediumScene> {
        let sum = |ps: &[Phantom]| -> Vec<f64> {
            self.grid.points().map(|x| ps.iter().map(|p| p.eval(x)).sum()).collect()
        };
        MediumScene::new(self.grid, sum(&self.sigma), sum(&self.potential), sum(&self.source))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::cube(1.0, 12).unwrap()
    }

    #[test]
    fn builder_and_support() {
        let s = MediumScene::builder(grid()).sigma(Phantom::ball(0.5, 1.0)).build().unwrap();
        assert!(s.has_noise() && !s.has_potential() && !s.has_source());
        let count = s.support_mask().iter().filter(|&&m| m).count();
        assert!(count > 0);
        assert!(s.support_diameter() > 0.9 && s.support_diameter() < 1.6);
    }

    #[test]
    fn rejects_support_in_padding_negative_sigma_and_nan() {
        let g = grid();
        assert!(MediumScene::builder(g).source(Phantom::ball(0.9, 1.0)).build().is_err());
        let mut neg = vec![0.0; g.len()];
        neg[g.index(6, 6, 6)] = -1.0;
        assert!(MediumScene::new(g, neg, vec![0.0; g.len()], vec![0.0; g.len()]).is_err());
        let mut nan = vec![0.0; g.len()];
        nan[g.index(6, 6, 6)] = f64::NAN;
        assert!(MediumScene::new(g, vec![0.0; g.len()], nan, vec![0.0; g.len()]).is_err());
        assert!(MediumScene::new(g, vec![0.0; 3], vec![0.0; g.len()], vec![0.0; g.len()]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = MediumScene::builder(grid())
            .sigma(Phantom::ball(0.5, 1.0))
            .potential(Phantom::bump(0.4, 0.1))
            .source(Phantom::bump(0.3, -2.0))
            .build()
            .unwrap();
        let path = dir.path().join("scene.json");
        s.save(&path).unwrap();
        let back = MediumScene::load(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.digest(), s.digest());
    }

    #[test]
    fn tampered_volume_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let s = MediumScene::builder(grid()).sigma(Phantom::ball(0.5, 1.0)).build().unwrap();
        let path = dir.path().join("scene.json");
        s.save(&path).unwrap();
        let g = grid();
        let mut sigma = s.sigma().to_vec();
        sigma[g.index(6, 6, 6)] = 2.0;
        write_volume(&dir.path().join("scene.sigma.f64"), &sigma).unwrap();
        assert!(matches!(MediumScene::load(&path), Err(Error::Checksum(_))));
    }

    #[test]
    fn ball_transform_at_zero_is_volume() {
        let b = Phantom::ball(0.5, 1.0);
        let v = b.fourier_hat([0.0; 3]);
        let expect = (2.0 * std::f64::consts::PI).powf(-1.5) * 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((v.re - expect).abs() < 1e-15 && v.im == 0.0);
        assert!((expect - 0.033246).abs() < 1e-6);
    }

    #[test]
    fn bump_transform_at_zero() {
        // ∫ (1 - r²)⁴ 4π r² dr over [0, 1] = 4π · 128/3465.
        let v = Phantom::bump(1.0, 1.0).fourier_hat([0.0; 3]).re;
        let expect = (2.0 * std::f64::consts::PI).powf(-1.5) * 4.0 * std::f64::consts::PI * 128.0 / 3465.0;
        assert!((v - expect).abs() < 1e-6 * expect);
    }
}
