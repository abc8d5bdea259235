//! Recovery of the source mean `f` from an ensemble of active far fields
//! with the potential known.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{dirichlet_eigenpairs, EigenPair};
use super::gridding::{invert_polar, PolarGrid, PolarSamples};
use crate::domain::{norm3, FieldOnGrid, MediumScene, PlaneWave, FOURIER_NORM};
use crate::error::{Error, Result};
use crate::forward::{FarFieldDataset, FarFieldIndex, FarFieldRequest, ForwardModel, IncidentConfig, ProbeSolution, SolverSettings};
use crate::greens::WaveNumber;

/// Seeds, fixed incident direction and sample points of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub seeds: Vec<u64>,
    pub d_fixed: [f64; 3],
    pub k_list: Vec<f64>,
    pub xhat_list: Vec<[f64; 3]>,
}

impl EnsembleSpec {
    pub fn new(seeds: Vec<u64>, d_fixed: [f64; 3], k_list: Vec<f64>, xhat_list: Vec<[f64; 3]>) -> Result<Self> {
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("ensemble seeds must be distinct".into()));
        }
        IncidentConfig::active(d_fixed)?;
        for &k in &k_list {
            WaveNumber::new(k)?;
        }
        for &x in &xhat_list {
            if (norm3(x) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("observation direction {x:?} is not a unit vector")));
            }
        }
        Ok(EnsembleSpec { seeds, d_fixed, k_list, xhat_list })
    }

    /// Sample points `k = radius`, `x̂ = direction` of a polar grid.
    pub fn from_polar(seeds: Vec<u64>, d_fixed: [f64; 3], polar: &PolarGrid) -> Result<Self> {
        EnsembleSpec::new(seeds, d_fixed, polar.radii().to_vec(), polar.directions().to_vec())
    }

    pub fn requests(&self) -> Vec<FarFieldRequest> {
        let mut out = Vec::with_capacity(self.seeds.len() * self.k_list.len() * self.xhat_list.len());
        for &seed in &self.seeds {
            for &k in &self.k_list {
                for &xhat in &self.xhat_list {
                    out.push(FarFieldRequest { k, xhat, d: Some(self.d_fixed), seed: Some(seed) });
                }
            }
        }
        out
    }
}

/// The realizations an ensemble average runs over: every random seed, or
/// the noise-free records when the dataset has no random seed.
fn ensemble_seeds(data: &FarFieldDataset) -> Result<Vec<Option<u64>>> {
    let seeds = data.seeds();
    let random: Vec<Option<u64>> = seeds.iter().filter(|s| s.is_some()).copied().collect();
    if random.is_empty() {
        return if seeds.contains(&None) { Ok(vec![None]) } else { Err(Error::InsufficientSeeds { got: 0, need: 2 }) };
    }
    if random.len() < 2 {
        return Err(Error::InsufficientSeeds { got: random.len(), need: 2 });
    }
    Ok(random)
}

fn mean_and_stderr(values: &[Complex64]) -> (Complex64, f64) {
    let n = values.len() as f64;
    let v0 = values[0];
    let shift = values.iter().map(|v| v - v0).sum::<Complex64>() / n;
    if values.len() < 2 {
        return (v0, 0.0);
    }
    let var = values.iter().map(|v| (v - v0 - shift).norm_sqr()).sum::<f64>() / (n - 1.0);
    (v0 + shift, (var / n).sqrt())
}

/// Per-sample ensemble means and standard errors.
fn ensemble_stats(index: &FarFieldIndex, seeds: &[Option<u64>], wanted: &[(f64, [f64; 3], Option<[f64; 3]>)]) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let per_seed = seeds.iter().map(|&s| index.lookup_all(wanted, s)).collect::<Result<Vec<_>>>()?;
    let mut means = Vec::with_capacity(wanted.len());
    let mut errs = Vec::with_capacity(wanted.len());
    let mut column = Vec::with_capacity(seeds.len());
    for i in 0..wanted.len() {
        column.clear();
        column.extend(per_seed.iter().map(|v| v[i]));
        let (m, e) = mean_and_stderr(&column);
        means.push(m);
        errs.push(e);
    }
    Ok((means, errs))
}

/// Mean and standard error across seeds of `u∞(x̂, k, d)`.
pub fn ensemble_mean_farfield(data: &FarFieldDataset, xhat: [f64; 3], k: f64, d: [f64; 3]) -> Result<(Complex64, f64)> {
    let seeds = ensemble_seeds(data)?;
    let index = FarFieldIndex::from_dataset(data);
    let (m, e) = ensemble_stats(&index, &seeds, &[(k, xhat, Some(d))])?;
    Ok((m[0], e[0]))
}

/// Tunables of the source inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceRecoveryConfig {
    /// Largest accepted `‖V‖∞`.
    pub v_threshold: f64,
    pub max_refinements: usize,
    /// Relative change of the Fourier samples below which refinement stops.
    pub tol: f64,
    /// Batches for the batch-means standard error of eigen-projections.
    pub batches: usize,
    pub solver: SolverSettings,
}

impl Default for SourceRecoveryConfig {
    fn default() -> Self {
        SourceRecoveryConfig { v_threshold: 1.0, max_refinements: 5, tol: 1e-10, batches: 16, solver: SolverSettings::default() }
    }
}

/// Outcome of the smallness checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub v_inf: f64,
    pub threshold: f64,
    pub lowest_eigenvalue: f64,
    pub contraction_max: f64,
    pub passed: bool,
}

/// Fourier samples and gridded field of one inversion.
#[derive(Debug, Clone)]
pub struct SourceHatEstimate {
    pub f_hat: PolarSamples,
    pub field: FieldOnGrid,
    pub residual_history: Vec<f64>,
}

/// Far-field machinery for a known potential, shared by every inversion
/// over the same sample points.
pub struct SourceInverter {
    scene: MediumScene,
    polar: PolarGrid,
    d: [f64; 3],
    domain: Vec<bool>,
    probes: Vec<ProbeSolution>,
    incident: Vec<Complex64>,
    gate: GateReport,
    config: SourceRecoveryConfig,
}

impl SourceInverter {
    /// Checks the smallness gate and precomputes one probe per sample point
    /// together with the incident-wave part of the far field.
    pub fn new(known: &MediumScene, polar: &PolarGrid, d: [f64; 3], config: SourceRecoveryConfig) -> Result<Self> {
        let grid = *known.grid();
        let inc = IncidentConfig::active(d)?;
        let v_inf = known.potential_sup();
        if v_inf > config.v_threshold {
            return Err(Error::SmallnessGate {
                v_inf,
                threshold: config.v_threshold,
                reason: "potential exceeds the configured bound".into(),
            });
        }
        if polar.radii()[0] <= 0.0 {
            return Err(Error::InvalidArgument("source sample radii are wave numbers and must be positive".into()));
        }
        let domain = grid.domain_mask();
        let lowest = dirichlet_eigenpairs(known.potential(), &grid, &domain, 1)?[0].lambda;
        let zeros = vec![0.0; grid.len()];
        let scene = known.with_sigma(zeros.clone())?.with_source(zeros)?;
        let model = ForwardModel::with_window_mask(scene.clone(), config.solver, &domain)?;
        let per_radius = polar
            .radii()
            .par_iter()
            .map(|&k| {
                let solver = model.at(WaveNumber::new(k)?).map_err(|e| match e {
                    Error::BelowThreshold { k, norm } => Error::SmallnessGate {
                        v_inf,
                        threshold: config.v_threshold,
                        reason: format!("Born series does not contract at k = {k} (norm estimate {norm})"),
                    },
                    other => other,
                })?;
                let norm = solver.contraction().norm_estimate;
                let mut probes = Vec::with_capacity(polar.directions().len());
                let mut incident = Vec::with_capacity(polar.directions().len());
                for &xhat in polar.directions() {
                    let probe = solver.probe(xhat)?;
                    incident.push(solver.far_field_from_probe(&probe, &inc, None)?.value);
                    probes.push(probe);
                }
                Ok((norm, probes, incident))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut probes = Vec::with_capacity(polar.len());
        let mut incident = Vec::with_capacity(polar.len());
        let mut contraction_max: f64 = 0.0;
        for (norm, p, i) in per_radius {
            contraction_max = contraction_max.max(norm);
            probes.extend(p);
            incident.extend(i);
        }
        let gate = GateReport { v_inf, threshold: config.v_threshold, lowest_eigenvalue: lowest, contraction_max, passed: true };
        Ok(SourceInverter { scene, polar: polar.clone(), d, domain, probes, incident, gate, config })
    }

    pub fn gate(&self) -> &GateReport {
        &self.gate
    }

    pub fn polar(&self) -> &PolarGrid {
        &self.polar
    }

    pub fn direction(&self) -> [f64; 3] {
        self.d
    }

    /// Deterministic far field of the incident wave scattered by `V`.
    pub fn incident_part(&self) -> &[Complex64] {
        &self.incident
    }

    /// Sample points as `(k, x̂, d)` in polar order.
    pub fn sample_keys(&self) -> Vec<(f64, [f64; 3], Option<[f64; 3]>)> {
        let mut out = Vec::with_capacity(self.polar.len());
        for &k in self.polar.radii() {
            for &x in self.polar.directions() {
                out.push((k, x, Some(self.d)));
            }
        }
        out
    }

    fn grid_field(&self, f_hat: &[Complex64]) -> Result<Vec<f64>> {
        let samples = PolarSamples::new(self.polar.clone(), f_hat.to_vec())?;
        let mut values = invert_polar(&samples, self.scene.grid())?.field.real_parts();
        for (v, &inside) in values.iter_mut().zip(&self.domain) {
            if !inside {
                *v = 0.0;
            }
        }
        Ok(values)
    }

    /// `Σ_{j≥1} Σ_y e^{-ikx̂·y} ((V R)^j f)(y) h³` at every sample.
    fn multiple_scattering(&self, f: &[f64]) -> Vec<Complex64> {
        let grid = self.scene.grid();
        let vol = grid.voxel_volume();
        let points = self.polar.points();
        self.probes
            .par_iter()
            .zip(points.par_iter())
            .map(|(probe, &p)| probe.pairing_real(f) - PlaneWave::outgoing(grid, p).sum_real(f) * vol)
            .collect()
    }

    fn run(&self, mean: &[Complex64], refinements: usize, tol: f64, check_divergence: bool) -> Result<SourceHatEstimate> {
        if mean.len() != self.polar.len() {
            return Err(Error::InvalidArgument(format!("{} means for {} samples", mean.len(), self.polar.len())));
        }
        let data: Vec<Complex64> = mean.iter().zip(&self.incident).map(|(m, i)| (m - i) * (4.0 * PI)).collect();
        let mut f_hat: Vec<Complex64> = data.iter().map(|r| -r * FOURIER_NORM).collect();
        let mut field = self.grid_field(&f_hat)?;
        let mut history = Vec::new();
        if self.scene.has_potential() {
            for _ in 0..refinements {
                let m = self.multiple_scattering(&field);
                let next: Vec<Complex64> = data.iter().zip(&m).map(|(r, m)| -(r + m) * FOURIER_NORM).collect();
                let diff: f64 = next.iter().zip(&f_hat).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let size: f64 = next.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                let residual = if size > 0.0 { diff / size } else { 0.0 };
                f_hat = next;
                field = self.grid_field(&f_hat)?;
                if check_divergence && history.last().is_some_and(|&prev| residual > prev) {
                    history.push(residual);
                    return Err(Error::FixedPointDiverged { history });
                }
                history.push(residual);
                if residual <= tol {
                    break;
                }
            }
        }
        Ok(SourceHatEstimate {
            f_hat: PolarSamples::new(self.polar.clone(), f_hat)?,
            field: FieldOnGrid::from_real(*self.scene.grid(), &field)?,
            residual_history: history,
        })
    }

    /// `f̂(kx̂)` at every sample from ensemble means, refined against the
    /// multiple-scattering terms of the known potential.
    pub fn source_hat_estimate(&self, mean: &[Complex64]) -> Result<SourceHatEstimate> {
        self.run(mean, self.config.max_refinements, self.config.tol, true)
    }
}

/// Recovered source with diagnostics.
#[derive(Debug, Clone)]
pub struct SourceReconstruction {
    pub f_hat: PolarSamples,
    /// Standard error of each `f̂` sample from the ensemble spread.
    pub f_hat_stderr: Vec<f64>,
    pub field: FieldOnGrid,
    pub residual_history: Vec<f64>,
    pub gate: GateReport,
    pub realizations: usize,
}

/// Full recovery of `f` on the scene grid from an active ensemble dataset.
pub fn recover_source(data: &FarFieldDataset, inverter: &SourceInverter) -> Result<SourceReconstruction> {
    let seeds = ensemble_seeds(data)?;
    let index = FarFieldIndex::from_dataset(data);
    let (mean, err) = ensemble_stats(&index, &seeds, &inverter.sample_keys())?;
    let est = inverter.source_hat_estimate(&mean)?;
    Ok(SourceReconstruction {
        f_hat: est.f_hat,
        f_hat_stderr: err.iter().map(|e| e * 4.0 * PI * FOURIER_NORM).collect(),
        field: est.field,
        residual_history: est.residual_history,
        gate: inverter.gate,
        realizations: seeds.len(),
    })
}

/// Batch-means standard error of `⟨f_rec, v_m⟩`: the seeds are split into
/// equal consecutive batches, each batch is inverted with the same number of
/// refinements as `reference`, and the spread of the projections is scaled by
/// `1/√batches`.
pub fn projection_stderr(
    data: &FarFieldDataset,
    inverter: &SourceInverter,
    reference: &SourceReconstruction,
    pairs: &[EigenPair],
) -> Result<Vec<f64>> {
    let seeds = ensemble_seeds(data)?;
    let batches = inverter.config.batches;
    if batches < 2 || seeds.len() < 2 * batches {
        return Err(Error::InsufficientSeeds { got: seeds.len(), need: 2 * batches.max(2) });
    }
    let size = seeds.len() / batches;
    let index = FarFieldIndex::from_dataset(data);
    let keys = inverter.sample_keys();
    let refinements = reference.residual_history.len();
    let vol = inverter.scene.grid().voxel_volume();
    let projections = (0..batches)
        .map(|b| {
            let (mean, _) = ensemble_stats(&index, &seeds[b * size..(b + 1) * size], &keys)?;
            let field = inverter.run(&mean, refinements, 0.0, false)?.field;
            Ok(pairs
                .iter()
                .map(|p| field.values().iter().zip(p.v.values()).map(|(a, b)| a.re * b.re).sum::<f64>() * vol)
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let nb = batches as f64;
    Ok((0..pairs.len())
        .map(|m| {
            let mean = projections.iter().map(|p| p[m]).sum::<f64>() / nb;
            let var = projections.iter().map(|p| (p[m] - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            (var / nb).sqrt()
        })
        .collect())
}
