//! Potential recovery from active far-field differences over two incident
//! directions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gridding::{invert_polar, PolarSamples};
use crate::domain::{norm3, FieldOnGrid, GridSpec};
use crate::error::{Error, Result};
use crate::forward::{FarFieldDataset, FarFieldIndex, FarFieldRequest};
use crate::greens::WaveNumber;

/// Observation and incident directions that isolate `V̂(p)` at wave number
/// `k`: `k(x̂ − d1) = p` while `k(x̂ − d2)` grows with `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionTriple {
    pub p: [f64; 3],
    pub k: WaveNumber,
    pub xhat: [f64; 3],
    pub d1: [f64; 3],
    pub d2: [f64; 3],
}

fn perpendicular(p: [f64; 3]) -> [f64; 3] {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| p[b].abs().total_cmp(&p[a].abs()).then(a.cmp(&b)));
    let (i, j) = (order[0], order[1]);
    let mut q = [0.0; 3];
    q[i] = p[j];
    q[j] = -p[i];
    if norm3(q) == 0.0 {
        // Only one nonzero component: use the next axis.
        q = [0.0; 3];
        q[j] = 1.0;
    }
    q
}

/// The direction triple for frequency `p` at wave number `k > |p|/2`.
pub fn make_direction_triple(p: [f64; 3], k: WaveNumber) -> Result<DirectionTriple> {
    let kv = k.get();
    let pn = norm3(p);
    if !p.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidArgument(format!("frequency {p:?} is not finite")));
    }
    if kv <= pn / 2.0 {
        return Err(Error::InvalidArgument(format!("k = {kv} must exceed |p|/2 = {}", pn / 2.0)));
    }
    if pn == 0.0 {
        return Ok(DirectionTriple { p, k, xhat: [1.0, 0.0, 0.0], d1: [1.0, 0.0, 0.0], d2: [0.0, 1.0, 0.0] });
    }
    let q = perpendicular(p);
    let qn = norm3(q);
    let a = (1.0 - pn * pn / (4.0 * kv * kv)).sqrt();
    let mut xhat = [0.0; 3];
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for c in 0..3 {
        let e = q[c] / qn;
        let half = p[c] / (2.0 * kv);
        xhat[c] = a * e + half;
        d1[c] = a * e - half;
        d2[c] = p[c] / pn;
    }
    Ok(DirectionTriple { p, k, xhat: unit(xhat), d1: unit(d1), d2 })
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Active requests for every `(p, k)`: both incident directions at one
/// observation direction.
pub fn potential_requests(p_list: &[[f64; 3]], k_list: &[f64], seed: Option<u64>) -> Result<Vec<FarFieldRequest>> {
    let mut out = Vec::with_capacity(2 * p_list.len() * k_list.len());
    for &p in p_list {
        for &k in k_list {
            let t = make_direction_triple(p, WaveNumber::new(k)?)?;
            out.push(FarFieldRequest { k, xhat: t.xhat, d: Some(t.d1), seed });
            out.push(FarFieldRequest { k, xhat: t.xhat, d: Some(t.d2), seed });
        }
    }
    Ok(out)
}

/// `√(2/π)` times the far-field difference over the two incident directions.
pub fn potential_scale() -> f64 {
    (2.0 / PI).sqrt()
}

/// Raw estimate at one wave number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrend {
    pub k: f64,
    pub estimate: Complex64,
}

/// `V̂(p)` with the per-k sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialEstimate {
    pub p: [f64; 3],
    /// Richardson value from the largest two `k`, or the raw value when only
    /// one `k` is available.
    pub estimate: Complex64,
    pub extrapolated: bool,
    pub trend: Vec<PotentialTrend>,
}

/// Per-k raw estimates of `V̂(p)` read from `index` and their `1/k`
/// extrapolation.
pub fn potential_hat_from_index(index: &FarFieldIndex, seed: Option<u64>, p: [f64; 3], k_list: &[f64]) -> Result<PotentialEstimate> {
    if k_list.is_empty() {
        return Err(Error::InvalidArgument("empty k list".into()));
    }
    let mut ks = k_list.to_vec();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    let mut wanted = Vec::with_capacity(2 * ks.len());
    for &k in &ks {
        let t = make_direction_triple(p, WaveNumber::new(k)?)?;
        wanted.push((k, t.xhat, Some(t.d1)));
        wanted.push((k, t.xhat, Some(t.d2)));
    }
    let values = index.lookup_all(&wanted, seed)?;
    let trend: Vec<PotentialTrend> = ks
        .iter()
        .zip(values.chunks(2))
        .map(|(&k, pair)| PotentialTrend { k, estimate: (pair[0] - pair[1]) * potential_scale() })
        .collect();
    let (estimate, extrapolated) = match trend.len() {
        1 => (trend[0].estimate, false),
        n => {
            let (a, b) = (trend[n - 2], trend[n - 1]);
            ((b.estimate * b.k - a.estimate * a.k) / (b.k - a.k), true)
        }
    };
    Ok(PotentialEstimate { p, estimate, extrapolated, trend })
}

/// `V̂(p)` from a single-realization active dataset.
pub fn potential_hat_estimate(data: &FarFieldDataset, p: [f64; 3], k_list: &[f64]) -> Result<PotentialEstimate> {
    if data.records().iter().any(|r| r.d.is_none()) {
        return Err(Error::InvalidArgument("potential recovery needs active records".into()));
    }
    let (seed, index) = FarFieldIndex::single_realization(data)?;
    potential_hat_from_index(&index, seed, p, k_list)
}

/// Inverts polar `V̂` samples to a real (signed) potential.
pub fn reconstruct_potential(samples: &PolarSamples, target: &GridSpec) -> Result<FieldOnGrid> {
    Ok(invert_polar(samples, target)?.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{DatasetConfig, FarFieldRecord, Mode, SolverSettings};

    fn wn(k: f64) -> WaveNumber {
        WaveNumber::new(k).unwrap()
    }

    #[test]
    fn zero_frequency_uses_fixed_axes() {
        for k in [0.5, 3.0, 80.0] {
            let t = make_direction_triple([0.0; 3], wn(k)).unwrap();
            assert_eq!((t.xhat, t.d1, t.d2), ([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]));
        }
    }

    #[test]
    fn triple_satisfies_its_defining_properties() {
        let p = [1.0, 0.0, 0.0];
        let t = make_direction_triple(p, wn(10.0)).unwrap();
        for v in [t.xhat, t.d1, t.d2] {
            assert!((norm3(v) - 1.0).abs() < 1e-12);
        }
        for c in 0..3 {
            assert!((10.0 * (t.xhat[c] - t.d1[c]) - p[c]).abs() < 1e-10);
        }
        let gap = |k: f64| {
            let t = make_direction_triple(p, wn(k)).unwrap();
            k * norm3([t.xhat[0] - t.d2[0], t.xhat[1] - t.d2[1], t.xhat[2] - t.d2[2]])
        };
        assert!(gap(20.0) > gap(10.0));
    }

    #[test]
    fn rejects_low_wavenumbers() {
        assert!(make_direction_triple([4.0, 0.0, 0.0], wn(2.0)).is_err());
        assert!(make_direction_triple([4.0, 0.0, 0.0], wn(2.01)).is_ok());
    }

    #[test]
    fn richardson_removes_an_exact_inverse_k_remainder() {
        let p = [0.3, -1.2, 0.5];
        let truth = Complex64::new(0.7, -0.2);
        let slope = Complex64::new(3.0, 1.0);
        let ks = [10.0, 20.0, 40.0];
        let mut recs = Vec::new();
        for &k in &ks {
            let t = make_direction_triple(p, wn(k)).unwrap();
            let raw = (truth + slope / k) / potential_scale();
            recs.push(FarFieldRecord { xhat: t.xhat, k, d: Some(t.d1), seed: Some(4), value: raw + 1.5 });
            recs.push(FarFieldRecord { xhat: t.xhat, k, d: Some(t.d2), seed: Some(4), value: Complex64::new(1.5, 0.0) });
        }
        let ds = FarFieldDataset::new(recs, "x", DatasetConfig { mode: Mode::Active, settings: SolverSettings::default() }).unwrap();
        let est = potential_hat_estimate(&ds, p, &ks).unwrap();
        assert!(est.extrapolated);
        assert!((est.estimate - truth).norm() < 1e-12);
        let single = potential_hat_estimate(&ds, p, &[40.0]).unwrap();
        assert!(!single.extrapolated);
        assert!((single.estimate - (truth + slope / 40.0)).norm() < 1e-12);
        assert!(matches!(potential_hat_estimate(&ds, p, &[15.0]), Err(Error::CoverageGap { .. })));
    }

    #[test]
    fn requests_pair_both_directions() {
        let r = potential_requests(&[[0.0; 3], [1.0, 2.0, 0.0]], &[10.0, 20.0], Some(1)).unwrap();
        assert_eq!(r.len(), 8);
        assert_eq!(r[0].xhat, [1.0, 0.0, 0.0]);
        assert_eq!(r[1].d, Some([0.0, 1.0, 0.0]));
    }
}
