//! Single-realization variance recovery from passive far-field data.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gridding::{invert_polar, PolarGrid, PolarSamples};
use crate::domain::{FieldOnGrid, GridSpec, FOURIER_NORM};
use crate::error::{Error, Result};
use crate::forward::{FarFieldDataset, FarFieldIndex, FarFieldRequest, ForwardModel};
use crate::greens::WaveNumber;
use crate::noise::draw_noise;

/// `16π² / (2π)^{3/2}`: maps a far-field band average to `σ̂²`.
pub fn correlogram_scale() -> f64 {
    4.0 * (2.0 * PI).sqrt()
}

pub const MIN_BAND_NODES: usize = 8;
pub const DEFAULT_BAND_NODES: usize = 32;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const MIN_STABILITY_SEEDS: usize = 50;
/// Clamped negative mass above this fraction of the total flags a
/// reconstruction.
pub const CLAMP_FLAG_FRACTION: f64 = 0.1;

/// Midpoint nodes of the band `[K, 2K]`.
pub fn band_nodes(big_k: f64, n_k: usize) -> Vec<f64> {
    let step = big_k / n_k as f64;
    (0..n_k).map(|i| big_k + (i as f64 + 0.5) * step).collect()
}

#[derive(Debug, Clone, Deserialize)]
struct BandScheduleRepr {
    #[serde(default = "default_gamma")]
    gamma: f64,
    c: Option<f64>,
    j_list: Option<Vec<u32>>,
    bands: Option<Vec<f64>>,
    #[serde(default = "default_nodes")]
    n_k: usize,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_nodes() -> usize {
    DEFAULT_BAND_NODES
}

/// Band sequence `K_j ≥ c·j^{2+γ}` with `n_k` quadrature nodes per band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandScheduleRepr")]
pub struct BandSchedule {
    gamma: f64,
    c: f64,
    j_list: Vec<u32>,
    bands: Vec<f64>,
    n_k: usize,
}

impl TryFrom<BandScheduleRepr> for BandSchedule {
    type Error = Error;

    fn try_from(r: BandScheduleRepr) -> Result<Self> {
        match (r.bands, r.c, r.j_list) {
            (Some(bands), None, None) => BandSchedule::from_bands(r.gamma, &bands, r.n_k),
            (None, Some(c), Some(j)) => BandSchedule::power_law(r.gamma, c, j, r.n_k),
            (Some(bands), Some(c), Some(j)) => {
                let s = BandSchedule::power_law(r.gamma, c, j, r.n_k)?;
                let same = s.bands.len() == bands.len()
                    && s.bands.iter().zip(&bands).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs());
                if same {
                    Ok(s)
                } else {
                    BandSchedule::explicit(r.gamma, c, s.j_list, bands, r.n_k)
                }
            }
            _ => Err(Error::Config("schedule needs either `bands` or both `c` and `j_list`".into())),
        }
    }
}

impl BandSchedule {
    /// `K_j = c·j^{2+γ}` for the listed `j`.
    pub fn power_law(gamma: f64, c: f64, j_list: Vec<u32>, n_k: usize) -> Result<Self> {
        let bands = j_list.iter().map(|&j| c * (j as f64).powf(2.0 + gamma)).collect();
        BandSchedule::explicit(gamma, c, j_list, bands, n_k)
    }

    /// Explicit bands indexed `j = 1, 2, …`; `c` is the largest constant with
    /// `K_j ≥ c·j^{2+γ}`.
    pub fn from_bands(gamma: f64, bands: &[f64], n_k: usize) -> Result<Self> {
        let j_list: Vec<u32> = (1..=bands.len() as u32).collect();
        let c = bands
            .iter()
            .zip(&j_list)
            .map(|(k, &j)| k / (j as f64).powf(2.0 + gamma))
            .fold(f64::INFINITY, f64::min);
        BandSchedule::explicit(gamma, c, j_list, bands.to_vec(), n_k)
    }

    fn explicit(gamma: f64, c: f64, j_list: Vec<u32>, bands: Vec<f64>, n_k: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("c must be positive, got {c}")));
        }
        if bands.is_empty() || bands.len() != j_list.len() {
            return Err(Error::Config("schedule needs one band per index".into()));
        }
        if j_list.windows(2).any(|w| w[1] <= w[0]) || j_list[0] == 0 {
            return Err(Error::Config("band indices must be positive and increasing".into()));
        }
        if bands.iter().any(|k| !(k.is_finite() && *k > 0.0)) || bands.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("bands must be positive and strictly increasing".into()));
        }
        for (k, &j) in bands.iter().zip(&j_list) {
            if *k < c * (j as f64).powf(2.0 + gamma) * (1.0 - 1e-12) {
                return Err(Error::Config(format!("band {k} at index {j} is below c·j^(2+gamma)")));
            }
        }
        if n_k < MIN_BAND_NODES {
            return Err(Error::Config(format!("n_k = {n_k} is below {MIN_BAND_NODES}")));
        }
        Ok(BandSchedule { gamma, c, j_list, bands, n_k })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn j_list(&self) -> &[u32] {
        &self.j_list
    }

    pub fn bands(&self) -> &[f64] {
        &self.bands
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn final_band(&self) -> f64 {
        self.bands[self.bands.len() - 1]
    }

    /// Every wave number needed to evaluate all bands at every lag, sorted
    /// and deduplicated.
    pub fn wavenumbers(&self, taus: &[f64]) -> Vec<f64> {
        let mut set = BTreeSet::new();
        for &big_k in &self.bands {
            for k in band_nodes(big_k, self.n_k) {
                set.insert(k.to_bits());
                for &tau in taus {
                    set.insert((k + tau).to_bits());
                }
            }
        }
        let mut out: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
        out
    }
}

/// What a correlogram was formed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CorrelogramVariant {
    /// Raw far fields `u∞`.
    Raw,
    /// Far fields minus their noise-free mean.
    Centered,
    /// Random far-field components: `0` is the direct noise term, `1` the
    /// multiply scattered remainder.
    FComponent { p: u8, q: u8 },
}

/// One band average `(1/n_k) Σ conj(a(k_i))·b(k_i + τ)` over `[K, 2K]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelogramSample {
    pub tau: f64,
    pub xhat: [f64; 3],
    pub big_k: f64,
    pub value: Complex64,
    pub variant: CorrelogramVariant,
}

impl CorrelogramSample {
    /// The `σ̂²(τx̂)` estimate this band average implies.
    pub fn sigma2_hat(&self) -> Complex64 {
        match self.variant {
            CorrelogramVariant::FComponent { .. } => self.value * FOURIER_NORM,
            _ => self.value * correlogram_scale(),
        }
    }
}

fn check_lag(tau: f64, big_k: f64, n_k: usize) -> Result<()> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("lag must be nonnegative, got {tau}")));
    }
    if !(big_k.is_finite() && big_k > 0.0) {
        return Err(Error::InvalidArgument(format!("band start must be positive, got {big_k}")));
    }
    if n_k == 0 {
        return Err(Error::InvalidArgument("band needs at least one node".into()));
    }
    Ok(())
}

/// A single-realization view of a passive dataset: the records of one seed,
/// plus the noise-free records when present.
pub struct CorrelogramData {
    seed: Option<u64>,
    index: FarFieldIndex,
    has_mean: bool,
}

impl CorrelogramData {
    pub fn new(data: &FarFieldDataset) -> Result<Self> {
        let seeds = data.seeds();
        let random: Vec<u64> = seeds.iter().flatten().copied().collect();
        if random.len() > 1 {
            return Err(Error::MixedSeeds(random));
        }
        if data.records().iter().any(|r| r.d.is_some()) {
            return Err(Error::InvalidArgument("variance recovery needs passive records".into()));
        }
        Ok(CorrelogramData {
            seed: random.first().copied(),
            index: FarFieldIndex::from_dataset(data),
            has_mean: seeds.contains(&None) && !random.is_empty(),
        })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn band(&self, xhat: [f64; 3], tau: f64, big_k: f64, n_k: usize, variant: CorrelogramVariant) -> Result<CorrelogramSample> {
        check_lag(tau, big_k, n_k)?;
        let nodes = band_nodes(big_k, n_k);
        let mut wanted: Vec<(f64, [f64; 3], Option<[f64; 3]>)> = nodes.iter().map(|&k| (k, xhat, None)).collect();
        wanted.extend(nodes.iter().map(|&k| (k + tau, xhat, None)));
        let mut values = self.index.lookup_all(&wanted, self.seed)?;
        match variant {
            CorrelogramVariant::Raw => {}
            CorrelogramVariant::Centered => {
                if !self.has_mean {
                    return Err(Error::InvalidArgument(
                        "centered correlogram needs noise-free records alongside the realization".into(),
                    ));
                }
                let mean = self.index.lookup_all(&wanted, None)?;
                for (v, m) in values.iter_mut().zip(mean) {
                    *v -= m;
                }
            }
            CorrelogramVariant::FComponent { .. } => {
                return Err(Error::InvalidArgument("component correlograms are computed from a forward model".into()));
            }
        }
        let (a, b) = values.split_at(n_k);
        let value = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() / n_k as f64;
        Ok(CorrelogramSample { tau, xhat, big_k, value, variant })
    }
}

/// Band correlogram of the raw far fields of a single-realization passive
/// dataset.
pub fn band_correlogram(data: &FarFieldDataset, xhat: [f64; 3], tau: f64, big_k: f64, n_k: usize) -> Result<CorrelogramSample> {
    CorrelogramData::new(data)?.band(xhat, tau, big_k, n_k, CorrelogramVariant::Raw)
}

/// Band correlogram of the random components `conj(F_p(k))·F_q(k + τ)` of
/// one noise realization, with `jmax` multiple-scattering terms in `F_1`.
#[allow(clippy::too_many_arguments)]
pub fn component_correlogram(
    model: &ForwardModel,
    seed: u64,
    xhat: [f64; 3],
    tau: f64,
    big_k: f64,
    n_k: usize,
    (p, q): (u8, u8),
    jmax: usize,
) -> Result<CorrelogramSample> {
    check_lag(tau, big_k, n_k)?;
    if p > 1 || q > 1 {
        return Err(Error::InvalidArgument(format!("component indices must be 0 or 1, got ({p}, {q})")));
    }
    let noise = draw_noise(model.scene().grid(), seed);
    let pick = |k: f64, which: u8| -> Result<Complex64> {
        let (f0, f1) = model.at(WaveNumber::new(k)?)?.born_components(xhat, &noise, jmax)?;
        Ok(if which == 0 { f0 } else { f1 })
    };
    let mut sum = Complex64::new(0.0, 0.0);
    for k in band_nodes(big_k, n_k) {
        sum += pick(k, p)?.conj() * pick(k + tau, q)?;
    }
    Ok(CorrelogramSample {
        tau,
        xhat,
        big_k,
        value: sum / n_k as f64,
        variant: CorrelogramVariant::FComponent { p, q },
    })
}

/// One row of the band trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandTrend {
    pub big_k: f64,
    pub correlogram: Complex64,
    pub estimate: Complex64,
    /// `|estimate(K_j) − estimate(K_last)|`.
    pub deviation: f64,
}

/// `σ̂²(τx̂)` from the final band, with the whole band sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sigma2HatEstimate {
    pub tau: f64,
    pub xhat: [f64; 3],
    pub estimate: Complex64,
    pub trend: Vec<BandTrend>,
}

impl CorrelogramData {
    pub fn recover(&self, xhat: [f64; 3], tau: f64, schedule: &BandSchedule, variant: CorrelogramVariant) -> Result<Sigma2HatEstimate> {
        let samples = schedule
            .bands()
            .iter()
            .map(|&big_k| self.band(xhat, tau, big_k, schedule.n_k(), variant))
            .collect::<Result<Vec<_>>>()?;
        let last = samples[samples.len() - 1].sigma2_hat();
        let trend = samples
            .iter()
            .map(|s| BandTrend {
                big_k: s.big_k,
                correlogram: s.value,
                estimate: s.sigma2_hat(),
                deviation: (s.sigma2_hat() - last).norm(),
            })
            .collect();
        Ok(Sigma2HatEstimate { tau, xhat, estimate: last, trend })
    }
}

/// `4√(2π)` times the final-band correlogram of a single realization.
pub fn recover_sigma2_hat(data: &FarFieldDataset, xhat: [f64; 3], tau: f64, schedule: &BandSchedule) -> Result<Sigma2HatEstimate> {
    CorrelogramData::new(data)?.recover(xhat, tau, schedule, CorrelogramVariant::Raw)
}

/// Passive requests covering every band of `schedule` at every lag.
pub fn variance_requests(xhats: &[[f64; 3]], taus: &[f64], schedule: &BandSchedule, seed: Option<u64>) -> Vec<FarFieldRequest> {
    let ks = schedule.wavenumbers(taus);
    let mut out = Vec::with_capacity(ks.len() * xhats.len());
    for &xhat in xhats {
        for &k in &ks {
            out.push(FarFieldRequest { k, xhat, d: None, seed });
        }
    }
    out
}

/// Across-seed spread of the correlogram at one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub big_k: f64,
    pub variance: f64,
    pub stderr: f64,
    pub seeds: usize,
}

/// Per-band variances and the fitted log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    pub slope: f64,
    pub slope_stderr: f64,
    /// 95% interval for the slope.
    pub confidence: (f64, f64),
}

/// Variance across seeds of the `σ̂²` estimate at each band and the
/// weighted least-squares slope of `ln variance` against `ln K`.
pub fn variance_statistical_stability(
    data: &FarFieldDataset,
    xhat: [f64; 3],
    tau: f64,
    bands: &[f64],
    n_k: usize,
) -> Result<StabilityTable> {
    let per_seed: Vec<CorrelogramData> = FarFieldIndex::split_by_seed(data)
        .into_iter()
        .filter_map(|(seed, index)| seed.map(|s| CorrelogramData { seed: Some(s), index, has_mean: false }))
        .collect();
    if per_seed.len() < MIN_STABILITY_SEEDS {
        return Err(Error::InsufficientSeeds { got: per_seed.len(), need: MIN_STABILITY_SEEDS });
    }
    if bands.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs at least two bands".into()));
    }
    let mut rows = Vec::with_capacity(bands.len());
    for &big_k in bands {
        let values = per_seed
            .iter()
            .map(|view| view.band(xhat, tau, big_k, n_k, CorrelogramVariant::Raw).map(|s| s.sigma2_hat()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(spread(big_k, &values));
    }
    let (slope, slope_stderr) = log_log_slope(&rows)?;
    Ok(StabilityTable { rows, slope, slope_stderr, confidence: (slope - 1.96 * slope_stderr, slope + 1.96 * slope_stderr) })
}

fn spread(big_k: f64, values: &[Complex64]) -> StabilityRow {
    let n = values.len() as f64;
    let mean = values.iter().sum::<Complex64>() / n;
    let z: Vec<f64> = values.iter().map(|v| (v - mean).norm_sqr() * n / (n - 1.0)).collect();
    let variance = z.iter().sum::<f64>() / n;
    let z_var = z.iter().map(|x| (x - variance).powi(2)).sum::<f64>() / (n - 1.0);
    StabilityRow { big_k, variance, stderr: (z_var / n).sqrt(), seeds: values.len() }
}

fn log_log_slope(rows: &[StabilityRow]) -> Result<(f64, f64)> {
    let mut pts = Vec::with_capacity(rows.len());
    for r in rows {
        if !(r.variance > 0.0) {
            return Err(Error::InvalidArgument(format!("zero correlogram variance at K = {}", r.big_k)));
        }
        let rel = (r.stderr / r.variance).max(1e-12);
        pts.push((r.big_k.ln(), r.variance.ln(), 1.0 / (rel * rel)));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    Ok((sxy / sxx, (1.0 / sxx).sqrt()))
}

/// Gridded `σ²` with its Fourier samples and diagnostics.
#[derive(Debug, Clone)]
pub struct VarianceReconstruction {
    pub sigma2_hat_samples: PolarSamples,
    pub sigma2_field: FieldOnGrid,
    pub clamp_mass: f64,
    pub clamp_flagged: bool,
    pub warnings: Vec<String>,
    pub diagnostics: Vec<Sigma2HatEstimate>,
}

/// Inverts polar `σ̂²` samples to a nonnegative field; negative values are
/// clamped to 0 and their share of the total absolute mass reported.
pub fn reconstruct_sigma2(samples: &PolarSamples, target: &GridSpec) -> Result<VarianceReconstruction> {
    let inv = invert_polar(samples, target)?;
    let mut values = inv.field.real_parts();
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    let negative: f64 = values.iter().filter(|v| **v < 0.0).fold(0.0, |a, v| a - v);
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let clamp_mass = if total > 0.0 { negative / total } else { 0.0 };
    let clamp_flagged = clamp_mass > CLAMP_FLAG_FRACTION;
    let mut warnings = inv.warnings;
    if clamp_flagged {
        warnings.push(format!("clamped negative mass is {:.1}% of the total", 100.0 * clamp_mass));
    }
    Ok(VarianceReconstruction {
        sigma2_hat_samples: samples.clone(),
        sigma2_field: FieldOnGrid::from_real(*target, &values)?,
        clamp_mass,
        clamp_flagged,
        warnings,
        diagnostics: Vec::new(),
    })
}

/// `σ̂²` at every point of `polar` (radius = lag, direction = x̂), then
/// gridded onto `target`.
pub fn recover_sigma2(data: &FarFieldDataset, polar: &PolarGrid, schedule: &BandSchedule, target: &GridSpec) -> Result<VarianceReconstruction> {
    let view = CorrelogramData::new(data)?;
    let mut values = Vec::with_capacity(polar.len());
    let mut diagnostics = Vec::with_capacity(polar.len());
    for &tau in polar.radii() {
        for &xhat in polar.directions() {
            let est = view.recover(xhat, tau, schedule, CorrelogramVariant::Raw)?;
            values.push(est.estimate);
            diagnostics.push(est);
        }
    }
    let samples = PolarSamples::new(polar.clone(), values)?;
    let mut out = reconstruct_sigma2(&samples, target)?;
    out.diagnostics = diagnostics;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{DatasetConfig, FarFieldRecord, Mode, SolverSettings};

    const X: [f64; 3] = [0.0, 0.0, 1.0];

    fn synthetic(seed: Option<u64>, taus: &[f64], sched: &BandSchedule, f: impl Fn(f64) -> Complex64) -> FarFieldDataset {
        let records = sched
            .wavenumbers(taus)
            .into_iter()
            .map(|k| FarFieldRecord { xhat: X, k, d: None, seed, value: f(k) })
            .collect();
        FarFieldDataset::new(records, "synthetic", DatasetConfig { mode: Mode::Passive, settings: SolverSettings::default() }).unwrap()
    }

    #[test]
    fn scale_constant_matches_its_definition() {
        let direct = 16.0 * PI * PI / (2.0 * PI).powf(1.5);
        assert!((correlogram_scale() - direct).abs() < 1e-14);
        assert!((correlogram_scale() * FOURIER_NORM - 16.0 * PI * PI / (2.0 * PI).powi(3)).abs() < 1e-14);
    }

    #[test]
    fn schedule_invariants() {
        let s = BandSchedule::from_bands(0.1, &[10.0, 20.0, 40.0, 80.0], 32).unwrap();
        for (k, &j) in s.bands().iter().zip(s.j_list()) {
            assert!(*k >= s.c() * (j as f64).powf(2.1) * (1.0 - 1e-12));
        }
        assert!(BandSchedule::from_bands(0.1, &[10.0, 10.0], 32).is_err());
        assert!(BandSchedule::from_bands(0.1, &[10.0, 20.0], 4).is_err());
        let p = BandSchedule::power_law(0.1, 2.0, vec![1, 2, 3], 8).unwrap();
        assert!((p.bands()[2] - 2.0 * 3f64.powf(2.1)).abs() < 1e-12);
        let toml_like: BandSchedule = serde_json::from_str(r#"{"bands":[10,20],"n_k":8}"#).unwrap();
        assert_eq!(toml_like.bands(), &[10.0, 20.0]);
        assert!(serde_json::from_str::<BandSchedule>(r#"{"n_k":8}"#).is_err());
    }

    #[test]
    fn wavenumbers_cover_every_lag_without_duplicates() {
        let s = BandSchedule::from_bands(0.1, &[10.0, 20.0], 8).unwrap();
        let taus = [0.0, 1.25, 2.5];
        let ks = s.wavenumbers(&taus);
        let mut oracle: Vec<f64> = Vec::new();
        for &b in s.bands() {
            for k in band_nodes(b, s.n_k()) {
                oracle.extend(taus.iter().map(|t| k + t));
            }
        }
        oracle.sort_by(f64::total_cmp);
        oracle.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        assert_eq!(ks, oracle);
    }

    #[test]
    fn zero_stream_gives_zero() {
        let s = BandSchedule::from_bands(0.1, &[10.0], 8).unwrap();
        let ds = synthetic(Some(1), &[0.5], &s, |_| Complex64::new(0.0, 0.0));
        assert_eq!(band_correlogram(&ds, X, 0.5, 10.0, 8).unwrap().value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn unit_modulus_stream_at_zero_lag_gives_one() {
        let s = BandSchedule::from_bands(0.1, &[10.0], 8).unwrap();
        let ds = synthetic(Some(1), &[0.0], &s, |k| Complex64::from_polar(1.0, 0.37 * k));
        let c = band_correlogram(&ds, X, 0.0, 10.0, 8).unwrap();
        assert!((c.value - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn lagged_phase_stream_gives_the_phase() {
        let s = BandSchedule::from_bands(0.1, &[10.0], 16).unwrap();
        let a = 0.37;
        let ds = synthetic(None, &[2.0], &s, |k| Complex64::from_polar(1.0, a * k));
        let c = band_correlogram(&ds, X, 2.0, 10.0, 16).unwrap();
        assert!((c.value - Complex64::from_polar(1.0, a * 2.0)).norm() < 1e-12);
    }

    #[test]
    fn coverage_gap_and_mixed_seeds_are_reported() {
        let s = BandSchedule::from_bands(0.1, &[10.0], 8).unwrap();
        let ds = synthetic(Some(1), &[0.0], &s, |_| Complex64::new(1.0, 0.0));
        match band_correlogram(&ds, X, 1.0, 10.0, 8) {
            Err(Error::CoverageGap { missing }) => assert_eq!(missing.len(), 8),
            other => panic!("{other:?}"),
        }
        let mut recs = ds.records().to_vec();
        recs.extend(synthetic(Some(2), &[0.0], &s, |_| Complex64::new(1.0, 0.0)).records().iter().copied());
        let mixed = FarFieldDataset::new(recs, "x", ds.config().clone()).unwrap();
        assert!(matches!(band_correlogram(&mixed, X, 0.0, 10.0, 8), Err(Error::MixedSeeds(_))));
    }

    #[test]
    fn centered_variant_subtracts_the_noise_free_records() {
        let s = BandSchedule::from_bands(0.1, &[10.0], 8).unwrap();
        let mean = |k: f64| Complex64::new(k, 1.0);
        let mut recs = synthetic(Some(3), &[0.0], &s, |k| mean(k) + Complex64::new(0.0, 2.0)).records().to_vec();
        recs.extend(synthetic(None, &[0.0], &s, mean).records().iter().copied());
        let ds = FarFieldDataset::new(recs, "x", DatasetConfig { mode: Mode::Passive, settings: SolverSettings::default() }).unwrap();
        let view = CorrelogramData::new(&ds).unwrap();
        let c = view.band(X, 0.0, 10.0, 8, CorrelogramVariant::Centered).unwrap();
        assert!((c.value - Complex64::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn recovery_reports_trend_against_final_band() {
        let s = BandSchedule::from_bands(0.1, &[10.0, 20.0], 8).unwrap();
        let ds = synthetic(Some(1), &[0.0], &s, |k| Complex64::new(1.0 / k.sqrt(), 0.0));
        let est = recover_sigma2_hat(&ds, X, 0.0, &s).unwrap();
        assert_eq!(est.trend.len(), 2);
        assert_eq!(est.trend[1].deviation, 0.0);
        assert!(est.trend[0].deviation > 0.0);
        assert_eq!(est.estimate, est.trend[1].estimate);
    }

    #[test]
    fn stability_needs_enough_seeds_and_recovers_a_known_slope() {
        let s = BandSchedule::from_bands(0.1, &[10.0, 20.0, 40.0, 80.0], 8).unwrap();
        let few: Vec<FarFieldRecord> = (0..10)
            .flat_map(|seed| synthetic(Some(seed), &[0.0], &s, |_| Complex64::new(1.0, 0.0)).records().to_vec())
            .collect();
        let ds = FarFieldDataset::new(few, "x", DatasetConfig { mode: Mode::Passive, settings: SolverSettings::default() }).unwrap();
        assert!(matches!(
            variance_statistical_stability(&ds, X, 0.0, s.bands(), 8),
            Err(Error::InsufficientSeeds { got: 10, need: 50 })
        ));
        // Per-seed amplitude a_s·K^{-1/4}: correlogram variance falls like K^{-1}.
        let mut recs = Vec::new();
        for seed in 0..200u64 {
            let a = 1.0 + crate::noise::voxel_normal(seed, 0);
            recs.extend(synthetic(Some(seed), &[0.0], &s, |k| {
                let band = s.bands().iter().rev().find(|&&b| k >= b).copied().unwrap();
                Complex64::new(a * band.powf(-0.25), 0.0)
            })
            .records()
            .iter()
            .copied());
        }
        let ds = FarFieldDataset::new(recs, "x", DatasetConfig { mode: Mode::Passive, settings: SolverSettings::default() }).unwrap();
        let t = variance_statistical_stability(&ds, X, 0.0, s.bands(), 8).unwrap();
        assert!((t.slope + 1.0).abs() < 1e-6, "slope {}", t.slope);
        assert!(t.rows.iter().all(|r| r.variance > 0.0 && r.seeds == 200));
        assert!(t.confidence.0 < t.slope && t.slope < t.confidence.1);
    }

    #[test]
    fn reconstruction_is_nonnegative_and_reports_clamping() {
        let g = GridSpec::cube(1.0, 16).unwrap();
        let pol = PolarGrid::uniform(8.0, 8, 32).unwrap();
        let zero = PolarSamples::new(pol.clone(), vec![Complex64::new(0.0, 0.0); pol.len()]).unwrap();
        let r = reconstruct_sigma2(&zero, &g).unwrap();
        assert_eq!(r.clamp_mass, 0.0);
        assert!(r.sigma2_field.real_parts().iter().all(|v| *v == 0.0));
        let osc = PolarSamples::from_fn(pol, |p| Complex64::new((p[0] * 0.7).cos(), 0.0));
        let r = reconstruct_sigma2(&osc, &g).unwrap();
        assert!(r.sigma2_field.real_parts().iter().all(|v| *v >= 0.0));
        assert!(r.clamp_mass > 0.0);
        assert_eq!(r.clamp_flagged, r.clamp_mass > CLAMP_FLAG_FRACTION);
    }
}
