//! Far-field records, datasets, their on-disk format and keyed lookup.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_unit, Mode, SolverSettings};
use crate::domain::volume::write_atomic;
use crate::error::{Error, MissingSample, Result};

pub const DATASET_MAGIC: &str = "RANDSCAT-FARFIELD";
const FORMAT_VERSION: u32 = 1;
/// Bytes per binary record: x̂(3), k, d(3), seed, re, im.
pub const RECORD_BYTES: usize = 80;

/// One sample `u∞(x̂, k, d, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldRecord {
    pub xhat: [f64; 3],
    pub k: f64,
    pub d: Option<[f64; 3]>,
    pub seed: Option<u64>,
    pub value: Complex64,
}

fn cmp_vec(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

impl FarFieldRecord {
    /// Dataset ordering: by `k`, then `x̂`, then `d`, then seed.
    pub fn key_cmp(&self, other: &Self) -> Ordering {
        self.k
            .total_cmp(&other.k)
            .then_with(|| cmp_vec(&self.xhat, &other.xhat))
            .then_with(|| match (&self.d, &other.d) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => cmp_vec(a, b),
            })
            .then_with(|| self.seed.cmp(&other.seed))
    }

    fn validate(&self) -> Result<()> {
        check_unit(self.xhat, "record direction")?;
        if let Some(d) = self.d {
            check_unit(d, "record incident direction")?;
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidArgument(format!("record wave number {} is not positive", self.k)));
        }
        if !(self.value.re.is_finite() && self.value.im.is_finite()) {
            return Err(Error::NonFinite(format!("far-field value at k = {}", self.k)));
        }
        Ok(())
    }

    fn encode(&self, out: &mut Vec<u8>) {
        let d = self.d.unwrap_or([f64::NAN; 3]);
        for v in self.xhat.iter().chain([self.k].iter()).chain(d.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let seed: i64 = self.seed.map_or(-1, |s| s as i64);
        out.extend_from_slice(&seed.to_le_bytes());
        out.extend_from_slice(&self.value.re.to_le_bytes());
        out.extend_from_slice(&self.value.im.to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Self {
        let f = |i: usize| f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        let seed = i64::from_le_bytes(bytes[56..64].try_into().expect("8 bytes"));
        let d = [f(4), f(5), f(6)];
        FarFieldRecord {
            xhat: [f(0), f(1), f(2)],
            k: f(3),
            d: if d.iter().all(|v| v.is_nan()) { None } else { Some(d) },
            seed: if seed < 0 { None } else { Some(seed as u64) },
            value: Complex64::new(f(8), f(9)),
        }
    }
}

/// Measurement mode and solver settings a dataset was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub mode: Mode,
    pub settings: SolverSettings,
}

/// A sorted, duplicate-free collection of far-field records.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldDataset {
    records: Vec<FarFieldRecord>,
    scene_hash: String,
    config: DatasetConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    scene_hash: String,
    mode: Mode,
    settings: SolverSettings,
    k_values: Vec<f64>,
    record_count: usize,
    record_bytes: usize,
}

impl FarFieldDataset {
    pub fn new(mut records: Vec<FarFieldRecord>, scene_hash: impl Into<String>, config: DatasetConfig) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        records.sort_by(|a, b| a.key_cmp(b));
        if let Some(w) = records.windows(2).find(|w| w[0].key_cmp(&w[1]).is_eq()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate record at k = {}, xhat = {:?}, seed = {:?}",
                w[0].k, w[0].xhat, w[0].seed
            )));
        }
        Ok(FarFieldDataset { records, scene_hash: scene_hash.into(), config })
    }

    pub fn records(&self) -> &[FarFieldRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scene_hash(&self) -> &str {
        &self.scene_hash
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    /// Distinct seeds present (`None` marks noise-free records).
    pub fn seeds(&self) -> BTreeSet<Option<u64>> {
        self.records.iter().map(|r| r.seed).collect()
    }

    /// Distinct wave numbers, ascending.
    pub fn k_values(&self) -> Vec<f64> {
        let mut ks: Vec<f64> = self.records.iter().map(|r| r.k).collect();
        ks.dedup_by(|a, b| a.total_cmp(b).is_eq());
        ks
    }

    /// Union of datasets generated from the same scene and configuration.
    pub fn merge(parts: Vec<FarFieldDataset>) -> Result<FarFieldDataset> {
        let mut iter = parts.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?;
        let (hash, config) = (first.scene_hash.clone(), first.config);
        let mut records = first.records;
        for part in iter {
            if part.scene_hash != hash {
                return Err(Error::InvalidArgument("datasets come from different scenes".into()));
            }
            if part.config != config {
                return Err(Error::InvalidArgument("datasets use different solver configurations".into()));
            }
            records.extend(part.records);
        }
        FarFieldDataset::new(records, hash, config)
    }

    /// Serialized bytes of the file format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            scene_hash: self.scene_hash.clone(),
            mode: self.config.mode,
            settings: self.config.settings,
            k_values: self.k_values(),
            record_count: self.records.len(),
            record_bytes: RECORD_BYTES,
        };
        let mut out = format!("{DATASET_MAGIC} {FORMAT_VERSION}\n").into_bytes();
        out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
        out.push(b'\n');
        out.reserve(self.records.len() * RECORD_BYTES);
        for r in &self.records {
            r.encode(&mut out);
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if line.trim_end() != format!("{DATASET_MAGIC} {FORMAT_VERSION}") {
            return Err(Error::format(path, format!("bad magic line {:?}", line.trim_end())));
        }
        line.clear();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::format(path, e.to_string()))?;
        if header.record_bytes != RECORD_BYTES {
            return Err(Error::format(path, format!("record size {} unsupported", header.record_bytes)));
        }
        let mut body = Vec::new();
        reader.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
        if body.len() != header.record_count * RECORD_BYTES {
            return Err(Error::format(
                path,
                format!("expected {} records, found {} bytes", header.record_count, body.len()),
            ));
        }
        let records = body.chunks_exact(RECORD_BYTES).map(FarFieldRecord::decode).collect();
        let config = DatasetConfig { mode: header.mode, settings: header.settings };
        FarFieldDataset::new(records, header.scene_hash, config).map_err(|e| Error::format(path, e.to_string()))
    }
}

type Key = ([i64; 3], i64, Option<[i64; 3]>, Option<u64>);

#[inline]
fn q(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

fn key(k: f64, xhat: [f64; 3], d: Option<[f64; 3]>, seed: Option<u64>) -> Key {
    (xhat.map(q), q(k), d.map(|d| d.map(q)), seed)
}

/// Lookup of far-field values by `(k, x̂, d, seed)` up to `1e-9` rounding.
#[derive(Debug, Clone, Default)]
pub struct FarFieldIndex {
    map: HashMap<Key, Complex64>,
}

impl FarFieldIndex {
    pub fn new(records: &[FarFieldRecord]) -> Self {
        FarFieldIndex { map: records.iter().map(|r| (key(r.k, r.xhat, r.d, r.seed), r.value)).collect() }
    }

    pub fn from_dataset(data: &FarFieldDataset) -> Self {
        FarFieldIndex::new(data.records())
    }

    pub fn get(&self, k: f64, xhat: [f64; 3], d: Option<[f64; 3]>, seed: Option<u64>) -> Option<Complex64> {
        self.map.get(&key(k, xhat, d, seed)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Values for every requested `(k, x̂, d)` under `seed`, or a coverage-gap
    /// error naming every absent sample.
    pub fn lookup_all(&self, wanted: &[(f64, [f64; 3], Option<[f64; 3]>)], seed: Option<u64>) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(wanted.len());
        let mut missing = Vec::new();
        for &(k, xhat, d) in wanted {
            match self.get(k, xhat, d, seed) {
                Some(v) => out.push(v),
                None => missing.push(MissingSample { k, xhat, d, seed }),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::CoverageGap { missing })
        }
    }

    /// Splits a multi-seed dataset into one index per seed.
    pub fn split_by_seed(data: &FarFieldDataset) -> BTreeMap<Option<u64>, FarFieldIndex> {
        let mut groups: BTreeMap<Option<u64>, Vec<FarFieldRecord>> = BTreeMap::new();
        for r in data.records() {
            groups.entry(r.seed).or_default().push(*r);
        }
        groups.into_iter().map(|(s, rs)| (s, FarFieldIndex::new(&rs))).collect()
    }

    /// The dataset's single seed (`None` when noise-free); mixed seeds are an
    /// error.
    pub fn single_realization(data: &FarFieldDataset) -> Result<(Option<u64>, FarFieldIndex)> {
        let seeds = data.seeds();
        if seeds.len() > 1 {
            return Err(Error::MixedSeeds(seeds.into_iter().flatten().collect()));
        }
        Ok((seeds.into_iter().next().flatten(), FarFieldIndex::from_dataset(data)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: f64, seed: Option<u64>, d: Option<[f64; 3]>) -> FarFieldRecord {
        FarFieldRecord { xhat: [0.0, 0.6, 0.8], k, d, seed, value: Complex64::new(k, -k * 0.5) }
    }

    fn cfg(mode: Mode) -> DatasetConfig {
        DatasetConfig { mode, settings: SolverSettings::default() }
    }

    #[test]
    fn sorted_and_deduplicated() {
        let ds = FarFieldDataset::new(vec![rec(2.0, Some(1), None), rec(1.0, Some(1), None)], "h", cfg(Mode::Passive)).unwrap();
        assert_eq!(ds.records()[0].k, 1.0);
        assert!(FarFieldDataset::new(vec![rec(1.0, Some(1), None), rec(1.0, Some(1), None)], "h", cfg(Mode::Passive)).is_err());
    }

    #[test]
    fn rejects_non_unit_direction() {
        let mut r = rec(1.0, None, None);
        r.xhat = [1.0, 1.0, 0.0];
        assert!(FarFieldDataset::new(vec![r], "h", cfg(Mode::Passive)).is_err());
    }

    #[test]
    fn file_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ff.bin");
        let ds = FarFieldDataset::new(
            vec![rec(1.0, None, Some([1.0, 0.0, 0.0])), rec(3.0, Some(7), Some([0.0, 0.0, 1.0])), rec(2.0, Some(2), None)],
            "abc",
            cfg(Mode::Active),
        )
        .unwrap();
        ds.write(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let first = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&bytes[..first], b"RANDSCAT-FARFIELD 1");
        let second = first + 1 + bytes[first + 1..].iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - second - 1, 3 * RECORD_BYTES);
        // Passive record: NaN direction and seed 2.
        let body = &bytes[second + 1..];
        let r1 = &body[RECORD_BYTES..2 * RECORD_BYTES];
        assert!(f64::from_le_bytes(r1[32..40].try_into().unwrap()).is_nan());
        assert_eq!(i64::from_le_bytes(r1[56..64].try_into().unwrap()), 2);
        let r0 = &body[..RECORD_BYTES];
        assert_eq!(i64::from_le_bytes(r0[56..64].try_into().unwrap()), -1);
        assert_eq!(FarFieldDataset::read(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ff.bin");
        let ds = FarFieldDataset::new(vec![rec(1.0, None, None)], "abc", cfg(Mode::Passive)).unwrap();
        let mut bytes = ds.to_bytes().unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(FarFieldDataset::read(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn index_lookup_and_gaps() {
        let ds = FarFieldDataset::new(vec![rec(1.0, Some(3), None), rec(2.0, Some(3), None)], "h", cfg(Mode::Passive)).unwrap();
        let (seed, idx) = FarFieldIndex::single_realization(&ds).unwrap();
        assert_eq!(seed, Some(3));
        let x = [0.0, 0.6, 0.8];
        assert_eq!(idx.get(1.0 + 1e-12, x, None, Some(3)), Some(Complex64::new(1.0, -0.5)));
        match idx.lookup_all(&[(1.0, x, None), (5.0, x, None)], Some(3)) {
            Err(Error::CoverageGap { missing }) => assert_eq!(missing.len(), 1),
            other => panic!("{other:?}"),
        }
        let mixed = FarFieldDataset::new(vec![rec(1.0, Some(3), None), rec(1.0, Some(4), None)], "h", cfg(Mode::Passive)).unwrap();
        assert!(matches!(FarFieldIndex::single_realization(&mixed), Err(Error::MixedSeeds(_))));
        assert_eq!(FarFieldIndex::split_by_seed(&mixed).len(), 2);
    }
}
