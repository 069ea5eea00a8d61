//! Result tables, summaries and atomic file emission.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use brg_core::analysis::stats::{mean, sem};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{HarnessError, Result};

/// Bumped whenever a column is added, removed or reordered.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    fn key_value(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(x) => Value::from(*x),
            Cell::Str(s) => Value::from(s.clone()),
            Cell::Missing => Value::Null,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            // Shortest representation that round-trips.
            Cell::Float(x) if x.is_finite() => write!(f, "{x}"),
            Cell::Float(x) if x.is_nan() => f.write_str("NaN"),
            Cell::Float(x) => f.write_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Cell::Str(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Str(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Str(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Missing, Into::into)
    }
}

pub type Row = Vec<Cell>;

/// A table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Row>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Row) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header {:?}", self.header);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
    }

    /// Mean, SEM and count of every metric column over rows grouped by the
    /// key columns. Missing and non-finite cells are skipped. Groups appear
    /// in first-seen order.
    pub fn aggregate(&self, keys: &[&str], metrics: &[&str]) -> Vec<Aggregate> {
        let key_idx: Vec<usize> = keys.iter().map(|k| self.column(k).expect("key column exists")).collect();
        let metric_idx: Vec<usize> = metrics.iter().map(|m| self.column(m).expect("metric column exists")).collect();

        let mut order: Vec<Vec<String>> = Vec::new();
        // Signature -> (key cells, per-metric values).
        type Group = (Vec<Cell>, Vec<Vec<f64>>);
        let mut groups: BTreeMap<Vec<String>, Group> = BTreeMap::new();
        for row in &self.rows {
            let sig: Vec<String> = key_idx.iter().map(|&i| row[i].to_string()).collect();
            let entry = groups.entry(sig.clone()).or_insert_with(|| {
                order.push(sig);
                (key_idx.iter().map(|&i| row[i].clone()).collect(), vec![Vec::new(); metrics.len()])
            });
            for (slot, &i) in entry.1.iter_mut().zip(&metric_idx) {
                if let Some(x) = row[i].as_f64().filter(|x| x.is_finite()) {
                    slot.push(x);
                }
            }
        }

        let mut out = Vec::new();
        for sig in order {
            let (key_cells, values) = &groups[&sig];
            let key: Map<String, Value> =
                keys.iter().zip(key_cells).map(|(k, c)| (k.to_string(), c.key_value())).collect();
            for (metric, xs) in metrics.iter().zip(values) {
                out.push(Aggregate {
                    key: key.clone(),
                    metric: metric.to_string(),
                    mean: (!xs.is_empty()).then(|| mean(xs)),
                    sem: (xs.len() > 1).then(|| sem(xs)),
                    n: xs.len(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub key: Map<String, Value>,
    pub metric: String,
    pub mean: Option<f64>,
    pub sem: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub seed: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub seeds: Vec<usize>,
    pub code_version: String,
    pub schema_version: u32,
}

/// Contents of `E<k>_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub title: String,
    pub provenance: Provenance,
    pub key_columns: Vec<String>,
    pub aggregates: Vec<Aggregate>,
    pub derived: Map<String, Value>,
    pub failures: Vec<CellFailure>,
    pub files: Vec<String>,
    pub config: Value,
}

/// Writes `bytes` next to `path` and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let wrap = |source| HarnessError::Write { path: path.to_path_buf(), source };
    fs::write(&tmp, bytes).map_err(wrap)?;
    fs::rename(&tmp, path).map_err(|source| {
        let _ = fs::remove_file(&tmp);
        HarnessError::Write { path: path.to_path_buf(), source }
    })
}

/// Creates `dir` if needed and checks that it accepts files.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    let wrap = |source| HarnessError::OutputDir { path: dir.to_path_buf(), source };
    fs::create_dir_all(dir).map_err(wrap)?;
    let probe = dir.join(".brg-write-probe");
    fs::write(&probe, b"").map_err(wrap)?;
    fs::remove_file(&probe).map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells_roundtrip() {
        for x in [0.1, 1.0 / 3.0, 2.5e-17, -7.0, 1e300] {
            let s = Cell::Float(x).to_string();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(Cell::Missing.to_string(), "");
        assert_eq!(Cell::from(None::<usize>), Cell::Missing);
    }

    #[test]
    fn csv_quotes_commas() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec!["x,y".into(), 1.5.into()]);
        let s = String::from_utf8(t.to_csv_bytes().unwrap()).unwrap();
        assert_eq!(s, "a,b\n\"x,y\",1.5\n");
    }

    #[test]
    fn aggregate_groups_and_skips_missing() {
        let mut t = CsvTable::new(&["k", "v"]);
        t.push(vec!["a".into(), 1.0.into()]);
        t.push(vec!["b".into(), 5.0.into()]);
        t.push(vec!["a".into(), 3.0.into()]);
        t.push(vec!["a".into(), Cell::Missing]);
        let agg = t.aggregate(&["k"], &["v"]);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].key["k"], "a");
        assert_eq!(agg[0].mean, Some(2.0));
        assert_eq!(agg[0].n, 2);
        assert_eq!(agg[0].sem, Some(1.0));
        assert_eq!(agg[1].sem, None);
    }

    #[test]
    #[should_panic]
    fn ragged_row_panics() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec![1.0.into()]);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
