//! Resumable plan → synthesize → recover → report runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentMode};
use super::plan::{plan_measurements, MeasurementPlan};
use super::report::{emit_report, Diagnostics, EigenResidualRow, ValidationRow};
use crate::domain::volume::{write_atomic, write_volume};
use crate::domain::{fourier_transform_real, MediumScene};
use crate::error::{Error, Result};
use crate::forward::{
    synthesize_requests, DatasetConfig, FarFieldDataset, FarFieldIndex, FarFieldRecord, ForwardModel, Mode, SynthesisStrategy,
};
use crate::greens::WaveNumber;
use crate::inverse::{
    dirichlet_eigenpairs, eigen_residual_check, potential_hat_from_index, projection_stderr, recover_source, recover_sigma2,
    reconstruct_potential, variance_statistical_stability, CorrelogramData, CorrelogramVariant, PolarSamples, SourceInverter,
    SourceRecoveryConfig,
};

pub const MANIFEST_FORMAT: &str = "RANDSCAT-RUN";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLAN_FILE: &str = "plan.json";
pub const DATASET_FILE: &str = "farfield.bin";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    /// Hash of everything the stage read.
    pub input_hash: String,
    pub outputs: Vec<String>,
    pub started: u64,
    pub finished: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub artifact_version: String,
    pub config_hash: String,
    pub scene_hash: String,
    pub created: u64,
    pub updated: u64,
    pub stages: Vec<StageRecord>,
    /// Output path relative to the run directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub flags: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn combine(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

impl RunManifest {
    fn fresh(config_hash: String, scene_hash: String) -> Self {
        let t = now();
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            scene_hash,
            created: t,
            updated: t,
            stages: Vec::new(),
            outputs: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::format(path, format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        write_atomic(path, &b)
    }

    /// Checks that every listed output exists with its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, sum) in &self.outputs {
            let path = dir.join(name);
            if !path.exists() || &file_digest(&path)? != sum {
                return Err(Error::Checksum(path));
            }
        }
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    fn set_stage(&mut self, rec: StageRecord) {
        match self.stages.iter_mut().find(|s| s.name == rec.name) {
            Some(s) => *s = rec,
            None => self.stages.push(rec),
        }
    }
}

struct Runner<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn save(&mut self) -> Result<()> {
        self.manifest.updated = now();
        self.manifest.write(&self.dir.join(MANIFEST_FILE))
    }

    /// Path of an earlier output after checking its recorded checksum.
    fn input(&self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let want = self.manifest.outputs.get(name).ok_or_else(|| Error::Checksum(path.clone()))?;
        if !path.exists() || &file_digest(&path)? != want {
            return Err(Error::Checksum(path));
        }
        Ok(path)
    }

    fn input_hash(&self, name: &str) -> String {
        self.manifest.outputs.get(name).cloned().unwrap_or_default()
    }

    /// Runs `body` unless a completed record with the same input hash and
    /// intact outputs exists. A present but altered output is an error.
    fn stage(&mut self, name: &str, input_hash: String, body: impl FnOnce(&Path) -> Result<Vec<String>>) -> Result<bool> {
        if let Some(rec) = self.manifest.stage(name) {
            if rec.status == StageStatus::Done && rec.input_hash == input_hash {
                let mut intact = true;
                for out in &rec.outputs {
                    let path = self.dir.join(out);
                    if !path.exists() {
                        intact = false;
                        continue;
                    }
                    let recorded = self.manifest.outputs.get(out);
                    if recorded != Some(&file_digest(&path)?) {
                        let err = Error::Checksum(path);
                        return Err(Error::Stage { stage: name.into(), source: Box::new(err) });
                    }
                }
                if intact {
                    info!("stage {name}: outputs up to date, skipped");
                    return Ok(false);
                }
            }
        }
        info!("stage {name}: running");
        let started = now();
        match body(self.dir) {
            Ok(outputs) => {
                for out in &outputs {
                    let sum = file_digest(&self.dir.join(out))?;
                    self.manifest.outputs.insert(out.clone(), sum);
                }
                self.manifest.set_stage(StageRecord {
                    name: name.into(),
                    status: StageStatus::Done,
                    input_hash,
                    outputs,
                    started,
                    finished: now(),
                    error: None,
                });
                self.save()?;
                Ok(true)
            }
            Err(e) => {
                self.manifest.set_stage(StageRecord {
                    name: name.into(),
                    status: StageStatus::Failed,
                    input_hash,
                    outputs: Vec::new(),
                    started,
                    finished: now(),
                    error: Some(e.to_string()),
                });
                self.save()?;
                Err(Error::Stage { stage: name.into(), source: Box::new(e) })
            }
        }
    }
}

/// Executes the experiment in `out_dir`, resuming from any completed
/// stages. Relative scene paths resolve against `base`.
pub fn run_pipeline(config: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<RunManifest> {
    let scene = config.validate_with(base)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let config_hash = config.digest()?;
    let scene_hash = scene.digest();
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = match manifest_path.exists() {
        true => {
            let m = RunManifest::read(&manifest_path)?;
            if m.config_hash == config_hash && m.scene_hash == scene_hash {
                m
            } else {
                RunManifest::fresh(config_hash.clone(), scene_hash.clone())
            }
        }
        false => RunManifest::fresh(config_hash.clone(), scene_hash.clone()),
    };
    let mut run = Runner { dir: out_dir, manifest };

    run.stage("plan", combine(&[&config_hash, &scene_hash]), |dir| {
        plan_measurements(config)?.write(&dir.join(PLAN_FILE))?;
        Ok(vec![PLAN_FILE.into()])
    })?;

    let plan_hash = run.input_hash(PLAN_FILE);
    let plan_path = run.input(PLAN_FILE)?;
    run.stage("synthesize", combine(&[&plan_hash, &scene_hash, &config_hash]), |dir| {
        let plan = MeasurementPlan::read(&plan_path)?;
        let dataset = synthesize_plan(config, &scene, &plan)?;
        dataset.write(&dir.join(DATASET_FILE))?;
        Ok(vec![DATASET_FILE.into()])
    })?;

    let data_hash = run.input_hash(DATASET_FILE);
    let data_path = run.input(DATASET_FILE)?;
    run.stage("recover", combine(&[&data_hash, &config_hash, &scene_hash]), |dir| {
        let data = FarFieldDataset::read(&data_path)?;
        Ok(recover_dataset(config, &scene, &data, dir)?.1)
    })?;

    let diag_hash = run.input_hash(DIAGNOSTICS_FILE);
    let diag_path = run.input(DIAGNOSTICS_FILE)?;
    run.stage("report", combine(&[&diag_hash]), |dir| {
        let diag = Diagnostics::read(&diag_path)?;
        let report_dir = dir.join(REPORT_DIR);
        fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
        let written = emit_report(&diag, &report_dir)?;
        Ok(written
            .iter()
            .map(|p| format!("{REPORT_DIR}/{}", p.file_name().expect("file name").to_string_lossy()))
            .collect())
    })?;

    let diag = Diagnostics::read(&run.input(DIAGNOSTICS_FILE)?)?;
    if run.manifest.flags != diag.flags {
        run.manifest.flags = diag.flags;
        run.save()?;
    }
    if !manifest_path.exists() {
        run.save()?;
    }
    Ok(run.manifest)
}

/// Far fields for every planned request. Validate mode always uses the
/// direct strategy so the recovery stage can compare against reciprocity.
pub fn synthesize_plan(config: &ExperimentConfig, scene: &MediumScene, plan: &MeasurementPlan) -> Result<FarFieldDataset> {
    let model = ForwardModel::new(scene.clone(), config.solver)?;
    let strategy = match config.mode {
        ExperimentMode::Validate => SynthesisStrategy::Direct,
        _ => config.strategy,
    };
    let records = synthesize_requests(&model, &plan.requests, strategy)?;
    let mode = if plan.requests.iter().any(|r| r.d.is_some()) { Mode::Active } else { Mode::Passive };
    FarFieldDataset::new(records, model.scene_hash(), DatasetConfig { mode, settings: config.solver })
}

fn subset(data: &FarFieldDataset, keep: impl Fn(&FarFieldRecord) -> bool) -> Result<FarFieldDataset> {
    let records = data.records().iter().filter(|r| keep(r)).copied().collect();
    FarFieldDataset::new(records, data.scene_hash(), *data.config())
}

fn relative_l2(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        if mask.is_none_or(|m| m[i]) {
            num += (a[i] - b[i]).powi(2);
            den += b[i] * b[i];
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Runs the mode's estimator on `data`, writing its volume (if any) and
/// `diagnostics.json` into `dir`. Returns the diagnostics and the names of
/// the files written.
pub fn recover_dataset(config: &ExperimentConfig, scene: &MediumScene, data: &FarFieldDataset, dir: &Path) -> Result<(Diagnostics, Vec<String>)> {
    if data.scene_hash() != scene.digest() {
        return Err(Error::Config("dataset was synthesized from a different scene".into()));
    }
    let (diag, mut files) = recover(config, scene, data, dir)?;
    write_atomic(&dir.join(DIAGNOSTICS_FILE), &diag.to_bytes()?)?;
    files.push(DIAGNOSTICS_FILE.into());
    Ok((diag, files))
}

fn recover(config: &ExperimentConfig, scene: &MediumScene, data: &FarFieldDataset, dir: &Path) -> Result<(Diagnostics, Vec<String>)> {
    let mut diag = Diagnostics { mode: Some(config.mode), ..Default::default() };
    let mut files = Vec::new();
    let grid = scene.grid();
    match config.mode {
        ExperimentMode::Variance => {
            let v = config.variance.as_ref().expect("checked");
            let lags = v.lags.build()?;
            let main = subset(data, |r| r.seed == Some(v.seed))?;
            let sigma2: Vec<f64> = scene.sigma().iter().map(|s| s * s).collect();
            let mut worst: f64 = 0.0;
            if v.reconstruct {
                let rec = recover_sigma2(&main, &lags, &v.schedule, grid)?;
                write_volume(&dir.join("sigma2.f64"), &rec.sigma2_field.real_parts())?;
                files.push("sigma2.f64".into());
                diag.summary.insert("sigma2_rel_l2_error".into(), relative_l2(&rec.sigma2_field.real_parts(), &sigma2, None));
                diag.summary.insert("clamp_mass".into(), rec.clamp_mass);
                if rec.clamp_flagged {
                    diag.flags.push(format!("clamped mass {:.3} exceeds the flag threshold", rec.clamp_mass));
                }
                diag.warnings.extend(rec.warnings);
                diag.variance = rec.diagnostics;
            } else {
                let view = CorrelogramData::new(&main)?;
                for &tau in lags.radii() {
                    for &xhat in lags.directions() {
                        diag.variance.push(view.recover(xhat, tau, &v.schedule, CorrelogramVariant::Raw)?);
                    }
                }
            }
            for e in &diag.variance {
                let p = [e.tau * e.xhat[0], e.tau * e.xhat[1], e.tau * e.xhat[2]];
                let oracle = fourier_transform_real(grid, &sigma2, p)?;
                if oracle.norm() > 0.0 {
                    worst = worst.max((e.estimate - oracle).norm() / oracle.norm());
                }
            }
            diag.summary.insert("sigma2_hat_max_rel_error".into(), worst);
            if let Some(st) = &v.stability {
                let seeds = st.seed_start..st.seed_start + st.seeds;
                let sub = subset(data, |r| r.seed.is_some_and(|s| seeds.contains(&s)))?;
                let table = variance_statistical_stability(&sub, st.xhat, st.tau, v.schedule.bands(), v.schedule.n_k())?;
                diag.summary.insert("stability_slope".into(), table.slope);
                diag.summary.insert("stability_slope_stderr".into(), table.slope_stderr);
                diag.stability = Some(table);
            }
        }
        ExperimentMode::Potential => {
            let p = config.potential.as_ref().expect("checked");
            let (seed, index) = FarFieldIndex::single_realization(data)?;
            let mut worst: f64 = 0.0;
            let mut estimate = |pt: [f64; 3]| -> Result<_> {
                let e = potential_hat_from_index(&index, seed, pt, &p.k_list)?;
                let oracle = fourier_transform_real(grid, scene.potential(), pt)?;
                if oracle.norm() > 0.0 {
                    worst = worst.max((e.estimate - oracle).norm() / oracle.norm());
                }
                Ok(e)
            };
            if let Some(spec) = &p.p_grid {
                let polar = spec.build()?;
                let mut values = Vec::with_capacity(polar.len());
                for pt in polar.points() {
                    let e = estimate(pt)?;
                    values.push(e.estimate);
                    diag.potential.push(e);
                }
                let field = reconstruct_potential(&PolarSamples::new(polar, values)?, grid)?;
                write_volume(&dir.join("potential.f64"), &field.real_parts())?;
                files.push("potential.f64".into());
                diag.summary.insert("potential_rel_l2_error".into(), relative_l2(&field.real_parts(), scene.potential(), None));
            }
            for &pt in &p.points {
                let e = estimate(pt)?;
                diag.potential.push(e);
            }
            diag.summary.insert("potential_hat_max_rel_error".into(), worst);
        }
        ExperimentMode::Source => {
            let s = config.source.as_ref().expect("checked");
            let polar = s.polar.build()?;
            let zeros = vec![0.0; grid.len()];
            let known = scene.with_sigma(zeros.clone())?.with_source(zeros)?;
            let cfg = SourceRecoveryConfig {
                v_threshold: s.v_threshold,
                max_refinements: s.max_refinements,
                batches: s.batches,
                solver: config.solver,
                ..Default::default()
            };
            let inverter = SourceInverter::new(&known, &polar, s.d, cfg)?;
            let rec = recover_source(data, &inverter)?;
            let values = rec.field.real_parts();
            write_volume(&dir.join("source.f64"), &values)?;
            files.push("source.f64".into());
            let domain = grid.domain_mask();
            diag.summary.insert("source_rel_l2_error".into(), relative_l2(&values, scene.source(), Some(&domain)));
            diag.summary.insert("gate_v_inf".into(), rec.gate.v_inf);
            diag.summary.insert("gate_lowest_eigenvalue".into(), rec.gate.lowest_eigenvalue);
            diag.summary.insert("gate_contraction_max".into(), rec.gate.contraction_max);
            diag.summary.insert("realizations".into(), rec.realizations as f64);
            for (i, r) in rec.residual_history.iter().enumerate() {
                diag.summary.insert(format!("refinement_residual_{i}"), *r);
            }
            let pairs = dirichlet_eigenpairs(scene.potential(), grid, &domain, s.eigen_count)?;
            let truth = crate::domain::FieldOnGrid::from_real(*grid, scene.source())?;
            let proj = eigen_residual_check(&rec.field, &truth, &pairs)?;
            let se = if rec.realizations >= 2 * s.batches {
                projection_stderr(data, &inverter, &rec, &pairs)?
            } else {
                diag.warnings.push("too few realizations for batch standard errors".into());
                vec![f64::NAN; pairs.len()]
            };
            for (m, ((p, pr), e)) in pairs.iter().zip(&proj).zip(&se).enumerate() {
                if e.is_finite() && pr.abs() > 3.0 * e {
                    diag.flags.push(format!("eigen-residual {m} is {:.2} standard errors", pr.abs() / e));
                }
                diag.eigen.push(EigenResidualRow { m, lambda: p.lambda, projection: *pr, stderr: *e });
            }
        }
        ExperimentMode::Validate => {
            let v = config.validate.as_ref().expect("checked");
            let model = ForwardModel::new(scene.clone(), config.solver)?;
            let reqs: Vec<_> = data
                .records()
                .iter()
                .map(|r| crate::forward::FarFieldRequest { k: r.k, xhat: r.xhat, d: r.d, seed: r.seed })
                .collect();
            let reciprocal = synthesize_requests(&model, &reqs, SynthesisStrategy::Reciprocal)?;
            let mut contraction = BTreeMap::new();
            for &k in &v.k_list {
                contraction.insert(k.to_bits(), model.at(WaveNumber::new(k)?)?.contraction().norm_estimate);
            }
            let mut worst: f64 = 0.0;
            for (a, b) in data.records().iter().zip(&reciprocal) {
                let rel = (a.value - b.value).norm() / a.value.norm().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                diag.validation.push(ValidationRow {
                    k: a.k,
                    xhat: a.xhat,
                    direct: [a.value.re, a.value.im],
                    reciprocal: [b.value.re, b.value.im],
                    rel_diff: rel,
                    contraction: contraction.get(&a.k.to_bits()).copied().unwrap_or(f64::NAN),
                });
            }
            diag.summary.insert("max_rel_diff".into(), worst);
            if worst > v.tolerance {
                diag.flags.push(format!("direct and reciprocal far fields differ by {worst:.3e}"));
            }
        }
    }
    Ok((diag, files))
}
