//! Batched far-field synthesis over `(k, x̂, d, seed)` tuples.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetConfig, FarFieldDataset, FarFieldRecord};
use super::solver::{ForwardModel, WaveSolver};
use super::{IncidentConfig, Mode};
use crate::error::{Error, Result};
use crate::greens::WaveNumber;
use crate::noise::{draw_noise, NoiseRealization};

/// One far-field sample to synthesize; `d = None` is passive, `seed = None`
/// is noise-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldRequest {
    pub k: f64,
    pub xhat: [f64; 3],
    pub d: Option<[f64; 3]>,
    pub seed: Option<u64>,
}

impl FarFieldRequest {
    fn as_record(&self) -> FarFieldRecord {
        FarFieldRecord { xhat: self.xhat, k: self.k, d: self.d, seed: self.seed, value: Default::default() }
    }

    fn describe(&self) -> String {
        let mut s = format!("(k = {}, xhat = {:?}", self.k, self.xhat);
        if let Some(d) = self.d {
            s.push_str(&format!(", d = {d:?}"));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!(", seed = {seed}"));
        }
        s.push(')');
        s
    }

    fn incident(&self) -> Result<IncidentConfig> {
        match self.d {
            Some(d) => IncidentConfig::active(d),
            None => Ok(IncidentConfig::passive()),
        }
    }
}

/// How the far fields at one wave number are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisStrategy {
    /// One adjoint-form series per requested tuple.
    Direct,
    /// One probe per observation direction, reused for every source and seed.
    Reciprocal,
    /// Reciprocal when sources outnumber observation directions and the
    /// potential is nonzero, otherwise direct.
    #[default]
    Auto,
}

/// Solves every request, returning records in dataset order. Duplicate
/// requests are merged.
pub fn synthesize_requests(
    model: &ForwardModel,
    requests: &[FarFieldRequest],
    strategy: SynthesisStrategy,
) -> Result<Vec<FarFieldRecord>> {
    let mut reqs = requests.to_vec();
    reqs.sort_by(|a, b| a.as_record().key_cmp(&b.as_record()));
    reqs.dedup_by(|a, b| a.as_record().key_cmp(&b.as_record()).is_eq());

    let mut noises: BTreeMap<u64, NoiseRealization> = BTreeMap::new();
    if model.scene().has_noise() {
        for r in &reqs {
            if let Some(seed) = r.seed {
                noises.entry(seed).or_insert_with(|| draw_noise(model.scene().grid(), seed));
            }
        }
    }

    let mut groups: Vec<Vec<FarFieldRequest>> = Vec::new();
    for r in reqs {
        match groups.last_mut() {
            Some(g) if g[0].k.total_cmp(&r.k).is_eq() => g.push(r),
            _ => groups.push(vec![r]),
        }
    }
    let results: Vec<Result<Vec<FarFieldRecord>>> = groups
        .par_iter()
        .map(|group| synthesize_group(model, group, strategy, &noises))
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn wrap(req: &FarFieldRequest, e: Error) -> Error {
    Error::Request { request: req.describe(), source: Box::new(e) }
}

fn synthesize_group(
    model: &ForwardModel,
    group: &[FarFieldRequest],
    strategy: SynthesisStrategy,
    noises: &BTreeMap<u64, NoiseRealization>,
) -> Result<Vec<FarFieldRecord>> {
    let first = &group[0];
    let k = WaveNumber::new(first.k).map_err(|e| wrap(first, e))?;
    let solver = model.at(k).map_err(|e| wrap(first, e))?;
    let noise_of = |r: &FarFieldRequest| r.seed.and_then(|s| noises.get(&s));

    let mut by_direction: BTreeMap<[u64; 3], Vec<&FarFieldRequest>> = BTreeMap::new();
    for r in group {
        by_direction.entry(r.xhat.map(f64::to_bits)).or_default().push(r);
    }
    let reciprocal = match strategy {
        SynthesisStrategy::Direct => false,
        SynthesisStrategy::Reciprocal => true,
        SynthesisStrategy::Auto => {
            let sources: std::collections::BTreeSet<_> =
                group.iter().map(|r| (r.d.map(|d| d.map(f64::to_bits)), r.seed)).collect();
            model.scene().has_potential() && sources.len() > by_direction.len()
        }
    };
    let mut out = Vec::with_capacity(group.len());
    if reciprocal {
        // `group` is sorted by direction, so per-direction blocks are visited
        // in dataset order.
        let mut i = 0;
        while i < group.len() {
            let xhat = group[i].xhat;
            let probe = solver.probe(xhat).map_err(|e| wrap(&group[i], e))?;
            while i < group.len() && group[i].xhat == xhat {
                let r = &group[i];
                let inc = r.incident().map_err(|e| wrap(r, e))?;
                let v = solver.far_field_from_probe(&probe, &inc, noise_of(r)).map_err(|e| wrap(r, e))?;
                out.push(FarFieldRecord { value: v.value, ..r.as_record() });
                i += 1;
            }
        }
    } else {
        for r in group {
            out.push(direct(&solver, r, noise_of(r))?);
        }
    }
    Ok(out)
}

fn direct(solver: &WaveSolver<'_>, r: &FarFieldRequest, noise: Option<&NoiseRealization>) -> Result<FarFieldRecord> {
    let inc = r.incident().map_err(|e| wrap(r, e))?;
    let v = solver.far_field(r.xhat, &inc, noise).map_err(|e| wrap(r, e))?;
    Ok(FarFieldRecord { value: v.value, ..r.as_record() })
}

/// The full product `k_list × xhat_list × d_list × seeds` as a dataset.
/// Passive mode ignores `d_list`; a `None` seed requests the noise-free value.
pub fn synthesize_dataset(
    model: &ForwardModel,
    k_list: &[f64],
    xhat_list: &[[f64; 3]],
    d_list: &[[f64; 3]],
    seeds: &[Option<u64>],
    mode: Mode,
    strategy: SynthesisStrategy,
) -> Result<FarFieldDataset> {
    if k_list.is_empty() || xhat_list.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("k, direction and seed lists must be nonempty".into()));
    }
    let ds: Vec<Option<[f64; 3]>> = match mode {
        Mode::Passive => vec![None],
        Mode::Active if d_list.is_empty() => {
            return Err(Error::InvalidArgument("active synthesis needs incident directions".into()))
        }
        Mode::Active => d_list.iter().copied().map(Some).collect(),
    };
    let mut requests = Vec::with_capacity(k_list.len() * xhat_list.len() * ds.len() * seeds.len());
    for &k in k_list {
        for &xhat in xhat_list {
            for &d in &ds {
                for &seed in seeds {
                    requests.push(FarFieldRequest { k, xhat, d, seed });
                }
            }
        }
    }
    let records = synthesize_requests(model, &requests, strategy)?;
    FarFieldDataset::new(records, model.scene_hash(), DatasetConfig { mode, settings: *model.settings() })
}
