//! Recovery diagnostics and their CSV rendering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentMode;
use crate::domain::volume::write_atomic;
use crate::error::{Error, Result};
use crate::inverse::{PotentialEstimate, Sigma2HatEstimate, StabilityTable};

/// One eigen-projection of the source reconstruction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenResidualRow {
    pub m: usize,
    pub lambda: f64,
    pub projection: f64,
    pub stderr: f64,
}

/// Direct and reciprocal far fields at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub k: f64,
    pub xhat: [f64; 3],
    pub direct: [f64; 2],
    pub reciprocal: [f64; 2],
    pub rel_diff: f64,
    pub contraction: f64,
}

/// Everything the recovery stage reports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: Option<ExperimentMode>,
    #[serde(default)]
    pub variance: Vec<Sigma2HatEstimate>,
    #[serde(default)]
    pub stability: Option<StabilityTable>,
    #[serde(default)]
    pub potential: Vec<PotentialEstimate>,
    #[serde(default)]
    pub eigen: Vec<EigenResidualRow>,
    #[serde(default)]
    pub validation: Vec<ValidationRow>,
    #[serde(default)]
    pub summary: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Conditions that make the run's exit status nonzero.
    #[serde(default)]
    pub flags: Vec<String>,
}

impl Diagnostics {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        Ok(b)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Serialize)]
struct TrendCsv {
    tau: f64,
    xhat_x: f64,
    xhat_y: f64,
    xhat_z: f64,
    band: f64,
    estimate_re: f64,
    estimate_im: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct StabilityCsv {
    band: f64,
    variance: f64,
    stderr: f64,
    seeds: usize,
}

#[derive(Serialize)]
struct PotentialCsv {
    p_x: f64,
    p_y: f64,
    p_z: f64,
    kind: &'static str,
    k: f64,
    estimate_re: f64,
    estimate_im: f64,
}

#[derive(Serialize)]
struct ValidationCsv {
    k: f64,
    xhat_x: f64,
    xhat_y: f64,
    xhat_z: f64,
    direct_re: f64,
    direct_im: f64,
    reciprocal_re: f64,
    reciprocal_im: f64,
    rel_diff: f64,
    contraction: f64,
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    key: &'a str,
    value: f64,
}

/// File name and header of every report table.
pub const REPORT_FILES: [(&str, &str); 6] = [
    ("variance_trend.csv", "tau,xhat_x,xhat_y,xhat_z,band,estimate_re,estimate_im,deviation"),
    ("stability.csv", "band,variance,stderr,seeds"),
    ("potential_trend.csv", "p_x,p_y,p_z,kind,k,estimate_re,estimate_im"),
    ("eigen_residuals.csv", "m,lambda,projection,stderr"),
    ("validation.csv", "k,xhat_x,xhat_y,xhat_z,direct_re,direct_im,reciprocal_re,reciprocal_im,rel_diff,contraction"),
    ("summary.csv", "key,value"),
];

fn render<T: Serialize>(header: &str, rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// Writes every report table into `dir`; tables without data get only their
/// header line. Returns the written paths.
pub fn emit_report(diag: &Diagnostics, dir: &Path) -> Result<Vec<PathBuf>> {
    let h = |i: usize| REPORT_FILES[i].1;
    let trend = diag.variance.iter().flat_map(|e| {
        e.trend.iter().map(move |t| TrendCsv {
            tau: e.tau,
            xhat_x: e.xhat[0],
            xhat_y: e.xhat[1],
            xhat_z: e.xhat[2],
            band: t.big_k,
            estimate_re: t.estimate.re,
            estimate_im: t.estimate.im,
            deviation: t.deviation,
        })
    });
    let stability = diag.stability.iter().flat_map(|t| {
        t.rows.iter().map(|r| StabilityCsv { band: r.big_k, variance: r.variance, stderr: r.stderr, seeds: r.seeds })
    });
    let potential = diag.potential.iter().flat_map(|e| {
        let raw = e.trend.iter().map(move |t| PotentialCsv {
            p_x: e.p[0],
            p_y: e.p[1],
            p_z: e.p[2],
            kind: "raw",
            k: t.k,
            estimate_re: t.estimate.re,
            estimate_im: t.estimate.im,
        });
        let fin = std::iter::once(PotentialCsv {
            p_x: e.p[0],
            p_y: e.p[1],
            p_z: e.p[2],
            kind: if e.extrapolated { "extrapolated" } else { "single" },
            k: e.trend.last().map_or(f64::NAN, |t| t.k),
            estimate_re: e.estimate.re,
            estimate_im: e.estimate.im,
        });
        raw.chain(fin)
    });
    let validation = diag.validation.iter().map(|v| ValidationCsv {
        k: v.k,
        xhat_x: v.xhat[0],
        xhat_y: v.xhat[1],
        xhat_z: v.xhat[2],
        direct_re: v.direct[0],
        direct_im: v.direct[1],
        reciprocal_re: v.reciprocal[0],
        reciprocal_im: v.reciprocal[1],
        rel_diff: v.rel_diff,
        contraction: v.contraction,
    });
    let summary = diag.summary.iter().map(|(k, v)| SummaryCsv { key: k, value: *v });
    let tables = [
        render(h(0), trend)?,
        render(h(1), stability)?,
        render(h(2), potential)?,
        render(h(3), diag.eigen.iter().copied())?,
        render(h(4), validation)?,
        render(h(5), summary)?,
    ];
    let mut out = Vec::with_capacity(tables.len());
    for ((name, _), bytes) in REPORT_FILES.iter().zip(tables) {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::{BandTrend, StabilityRow};
    use num_complex::Complex64;

    fn strict_rows(path: &Path) -> (Vec<String>, usize) {
        let mut r = csv::ReaderBuilder::new().flexible(false).from_path(path).unwrap();
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let n = r.records().map(|rec| rec.unwrap()).count();
        (header, n)
    }

    #[test]
    fn empty_diagnostics_give_header_only_tables() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&Diagnostics::default(), dir.path()).unwrap();
        for (p, (_, header)) in paths.iter().zip(REPORT_FILES) {
            let (h, n) = strict_rows(p);
            assert_eq!(h.join(","), header);
            assert_eq!(n, 0);
        }
    }

    #[test]
    fn stability_table_columns_match_the_fit_output() {
        let dir = tempfile::tempdir().unwrap();
        let table = StabilityTable {
            rows: vec![
                StabilityRow { big_k: 10.0, variance: 0.5, stderr: 0.1, seeds: 50 },
                StabilityRow { big_k: 20.0, variance: 0.25, stderr: 0.05, seeds: 50 },
            ],
            slope: -1.0,
            slope_stderr: 0.2,
            confidence: (-1.4, -0.6),
        };
        let diag = Diagnostics {
            stability: Some(table.clone()),
            variance: vec![Sigma2HatEstimate {
                tau: 0.0,
                xhat: [0.0, 0.0, 1.0],
                estimate: Complex64::new(1.0, 0.0),
                trend: vec![BandTrend { big_k: 10.0, correlogram: Complex64::new(0.1, 0.0), estimate: Complex64::new(1.0, 0.0), deviation: 0.0 }],
            }],
            ..Default::default()
        };
        emit_report(&diag, dir.path()).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join("stability.csv")).unwrap();
        let rows: Vec<(f64, f64, f64, usize)> = r.deserialize().map(|x| x.unwrap()).collect();
        for (row, want) in rows.iter().zip(&table.rows) {
            assert_eq!(*row, (want.big_k, want.variance, want.stderr, want.seeds));
        }
        assert_eq!(strict_rows(&dir.path().join("variance_trend.csv")).1, 1);
    }
}
