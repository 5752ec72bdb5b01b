use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Column layout of the table written for Monte Carlo estimates.
pub const ESTIMATE_COLUMNS: [&str; 7] =
    ["hurst", "horizon", "grid_points", "samples", "value", "stderr", "seed"];

/// Same layout keyed by the lower-tail level instead of the horizon.
pub const LOWER_TAIL_COLUMNS: [&str; 7] =
    ["hurst", "eps", "grid_points", "samples", "value", "stderr", "seed"];

pub const PATH_COLUMNS: [&str; 6] = ["hurst", "horizon", "grid_points", "sample", "time", "value"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Real(f64),
    Count(u64),
}

impl Cell {
    /// Reals carry 17 significant digits, enough to round-trip any `f64`.
    pub fn render(&self) -> String {
        match *self {
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Count(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub hurst: f64,
    /// Horizon `T`, or `eps` for lower-tail tables.
    pub key: f64,
    pub grid_points: usize,
    pub samples: usize,
    pub value: f64,
    pub stderr: f64,
    pub seed: u64,
}

impl EstimateRow {
    pub fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Real(self.hurst),
            Cell::Real(self.key),
            Cell::Count(self.grid_points as u64),
            Cell::Count(self.samples as u64),
            Cell::Real(self.value),
            Cell::Real(self.stderr),
            Cell::Count(self.seed),
        ]
    }
}

/// Header then one line per row, UTF-8, every line newline-terminated.
pub fn emit_csv(path: &Path, columns: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
    if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
        return Err(CliError::Runtime(format!(
            "row of {} cells does not match the {} columns {columns:?}",
            bad.len(),
            columns.len()
        )));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(columns).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_bytes(path, &bytes)
}

/// Reads a table written by [`emit_csv`] back into named columns of reals.
pub fn read_csv(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut cols: BTreeMap<String, Vec<f64>> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (h, field) in headers.iter().zip(rec.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("row {}: column {h}: cannot parse {field:?}", line + 1)))?;
            cols.get_mut(h).expect("header present").push(v);
        }
    }
    Ok(cols)
}

pub fn emit_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `<out>.manifest.json` next to the result file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_have_seventeen_significant_digits() {
        assert_eq!(Cell::Real(0.1).render(), "1.0000000000000001e-1");
        assert_eq!(Cell::Real(-2.5).render(), "-2.5000000000000000e0");
        assert_eq!(Cell::Count(7).render(), "7");
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        emit_csv(&p, &ESTIMATE_COLUMNS, &[]).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "hurst,horizon,grid_points,samples,value,stderr,seed\n"
        );
        let cols = read_csv(&p).unwrap();
        assert_eq!(cols.len(), 7);
        assert!(cols.values().all(Vec::is_empty));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let vals = [
            0.1,
            1.0 / 3.0,
            std::f64::consts::PI * 1e-300,
            f64::MAX,
            f64::MIN_POSITIVE,
            5e-324,
            -0.0,
            0.682_689_492_137_085_9,
        ];
        let rows: Vec<Vec<Cell>> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                EstimateRow {
                    hurst: 0.5,
                    key: v,
                    grid_points: 4097,
                    samples: 100_000,
                    value: v,
                    stderr: v.abs() / 7.0,
                    seed: u64::MAX - i as u64,
                }
                .cells()
            })
            .collect();
        emit_csv(&p, &ESTIMATE_COLUMNS, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.ends_with('\n'));
        let cols = read_csv(&p).unwrap();
        for (i, &v) in vals.iter().enumerate() {
            assert_eq!(cols["value"][i].to_bits(), v.to_bits());
            assert_eq!(cols["stderr"][i].to_bits(), (v.abs() / 7.0).to_bits());
        }
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        assert!(emit_csv(&p, &ESTIMATE_COLUMNS, &[vec![Cell::Count(1)]]).is_err());
    }

    #[test]
    fn manifest_sits_next_to_results() {
        assert_eq!(
            manifest_path(Path::new("out/exit.csv")),
            PathBuf::from("out/exit.csv.manifest.json")
        );
    }
}
