//! Minimal numeric CSV: header row, 17-significant-digit floats (exact f64
//! round trip), `#`-prefixed comment lines tolerated on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Formats one float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `columns` of equal length under `header`. Rows are records,
/// columns are the named series.
pub fn write_columns(path: &Path, header: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(Error::Contract(format!(
            "{} header fields for {} columns",
            header.len(),
            columns.len()
        )));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Contract("ragged columns".into()));
    }
    let mut out = Vec::with_capacity(rows * header.len() * 24 + 64);
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::with_capacity(header.len() * 24);
    for r in 0..rows {
        line.clear();
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(col[r]));
        }
        writeln!(out, "{line}")?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Appends a `#`-prefixed comment line (e.g. a divergence flag) to an
/// existing CSV.
pub fn append_comment(path: &Path, comment: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    writeln!(f, "# {comment}")?;
    Ok(())
}

/// Parsed CSV: header fields plus a column-major numeric matrix
/// (rows = records).
pub struct CsvTable {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn column(&self, name: &str) -> Option<&Vec<f64>> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| &self.columns[i])
    }

    /// Matrix with one row per selected column name, one matrix column per
    /// record — the trajectory layout the analysis operations expect.
    pub fn to_trajectory(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let mut rows = Vec::with_capacity(names.len());
        for name in names {
            rows.push(self.column(name).ok_or_else(|| {
                Error::Contract(format!("CSV is missing column '{name}'"))
            })?);
        }
        let n = self.nrows();
        Ok(DMatrix::from_fn(names.len(), n, |i, j| rows[i][j]))
    }
}

pub fn read_table(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Contract(format!("{}: empty CSV", path.display())))?;
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Contract(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                header.len()
            )));
        }
        for (k, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::Contract(format!(
                    "{}: row {} field '{}' is not a number",
                    path.display(),
                    lineno + 2,
                    f
                ))
            })?;
            columns[k].push(v);
        }
    }
    Ok(CsvTable { header, columns })
}
