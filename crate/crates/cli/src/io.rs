//! Observation CSVs, edge JSON and small file helpers.
//!
//! Observations are long-format rows `sample_id,node_id,time,value` with
//! 1-based ids. Edge files are `{"p": .., "edges": [[j, l], ..]}`, 1-based,
//! `j < l`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fudge_core::curvefit::{Curve, RawDataset};
use fudge_core::fudge::EdgeSet;
use fudge_core::funcbasis::Domain;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    sample_id: usize,
    node_id: usize,
    time: f64,
    value: f64,
}

pub fn write_dataset(path: &Path, data: &RawDataset) -> CliResult<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", ctx())))?;
    for i in 0..data.n() {
        for j in 0..data.p() {
            let c = data.curve(i, j);
            for (&time, &value) in c.times().iter().zip(c.values()) {
                w.serialize(Row {
                    sample_id: i + 1,
                    node_id: j + 1,
                    time,
                    value,
                })
                .map_err(|e| CliError::Data(format!("{}: {e}", ctx())))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(&ctx(), e))
}

/// Raw rows grouped by `(sample, node)`, 0-based, with times sorted.
#[derive(Debug)]
pub struct ParsedCsv {
    pub n: usize,
    pub p: usize,
    curves: BTreeMap<(usize, usize), Vec<(f64, f64)>>,
}

impl ParsedCsv {
    pub fn time_range(&self) -> (f64, f64) {
        self.curves
            .values()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)))
    }

    pub fn into_dataset(self, domain: Domain) -> CliResult<RawDataset> {
        let (n, p) = (self.n, self.p);
        let curves = self
            .curves
            .into_values()
            .map(|obs| {
                let (t, v): (Vec<f64>, Vec<f64>) = obs.into_iter().unzip();
                Curve::new(t, v)
            })
            .collect::<fudge_core::Result<Vec<_>>>()
            .context("building curves")?;
        RawDataset::new(p, n, domain, curves).context("building dataset")
    }
}

pub fn read_csv(path: &Path) -> CliResult<ParsedCsv> {
    let name = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("reading {name}: {e}")))?;
    let mut curves: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for (k, row) in r.deserialize::<Row>().enumerate() {
        // header is line 1
        let line = k + 2;
        let row = row.map_err(|e| CliError::Data(format!("{name} line {line}: {e}")))?;
        if row.sample_id == 0 || row.node_id == 0 {
            return Err(CliError::Data(format!("{name} line {line}: ids are 1-based")));
        }
        if !(row.time.is_finite() && row.value.is_finite()) {
            return Err(CliError::Data(format!("{name} line {line}: non-finite time or value")));
        }
        curves
            .entry((row.sample_id - 1, row.node_id - 1))
            .or_default()
            .push((row.time, row.value));
    }
    if curves.is_empty() {
        return Err(CliError::Data(format!("{name}: no observations")));
    }
    let n = curves.keys().map(|k| k.0).max().unwrap_or(0) + 1;
    let p = curves.keys().map(|k| k.1).max().unwrap_or(0) + 1;
    for i in 0..n {
        for j in 0..p {
            if !curves.contains_key(&(i, j)) {
                return Err(CliError::Data(format!(
                    "{name}: no observations for sample_id {}, node_id {}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    for ((i, j), obs) in curves.iter_mut() {
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if obs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CliError::Data(format!(
                "{name}: repeated time for sample_id {}, node_id {}",
                i + 1,
                j + 1
            )));
        }
    }
    Ok(ParsedCsv { n, p, curves })
}

/// Read both populations on a shared domain: the configured one, or the
/// range of all observed times.
pub fn read_pair(x: &Path, y: &Path, domain: Option<[f64; 2]>) -> CliResult<(RawDataset, RawDataset)> {
    let px = read_csv(x)?;
    let py = read_csv(y)?;
    if px.p != py.p {
        return Err(CliError::Data(format!(
            "{} has {} nodes but {} has {}",
            x.display(),
            px.p,
            y.display(),
            py.p
        )));
    }
    let domain = match domain {
        Some([lo, hi]) => Domain::new(lo, hi),
        None => {
            let (a, b) = px.time_range();
            let (c, d) = py.time_range();
            Domain::new(a.min(c), b.max(d))
        }
    }
    .context("observation domain")?;
    Ok((px.into_dataset(domain)?, py.into_dataset(domain)?))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EdgeFile {
    pub p: usize,
    pub edges: Vec<[usize; 2]>,
}

impl From<&EdgeSet> for EdgeFile {
    fn from(e: &EdgeSet) -> Self {
        EdgeFile {
            p: e.p(),
            edges: e.iter().map(|(j, l)| [j + 1, l + 1]).collect(),
        }
    }
}

impl EdgeFile {
    pub fn to_edge_set(&self) -> CliResult<EdgeSet> {
        if self.edges.iter().any(|e| e[0] == 0 || e[1] == 0) {
            return Err(CliError::Data("edge ids are 1-based".into()));
        }
        EdgeSet::from_pairs(self.p, self.edges.iter().map(|e| (e[0] - 1, e[1] - 1))).context("edge list")
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(&format!("creating {}", path.display()), e))
}

/// Write rows of an already-serializable table to CSV.
pub fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Data(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_unordered_rows() {
        let text = "sample_id,node_id,time,value\n1,2,0.5,3\n1,1,0.5,1\n1,1,0.0,2\n1,2,0.0,4\n";
        let (_d, path) = tmp("x.csv", text);
        let parsed = read_csv(&path).unwrap();
        assert_eq!((parsed.n, parsed.p), (1, 2));
        let data = parsed.into_dataset(Domain::unit()).unwrap();
        assert_eq!(data.curve(0, 0).times(), &[0.0, 0.5]);
        assert_eq!(data.curve(0, 0).values(), &[2.0, 1.0]);
        assert_eq!(data.curve(0, 1).values(), &[4.0, 3.0]);
    }

    #[test]
    fn reports_missing_curves_and_bad_rows() {
        let (_d, path) = tmp("x.csv", "sample_id,node_id,time,value\n1,1,0,1\n2,2,0,1\n");
        let e = read_csv(&path).unwrap_err();
        assert!(e.to_string().contains("sample_id 1, node_id 2"), "{e}");
        let (_d, path) = tmp("x.csv", "sample_id,node_id,time,value\n1,1,0,abc\n");
        assert!(read_csv(&path).unwrap_err().to_string().contains("line 2"));
        let (_d, path) = tmp("x.csv", "sample_id,node_id,time,value\n0,1,0,1\n");
        assert_eq!(read_csv(&path).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn edge_file_is_one_based() {
        let e = EdgeSet::from_pairs(4, [(0, 3), (1, 2)]).unwrap();
        let f = EdgeFile::from(&e);
        assert_eq!(f.edges, vec![[1, 4], [2, 3]]);
        assert_eq!(f.to_edge_set().unwrap(), e);
    }
}
