//! CSV and JSON file plumbing.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Header and rows of a CSV file with a mandatory header row.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("missing column {name:?}; header is {:?}", self.headers))
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row[c].trim();
                cell.parse::<f64>()
                    .with_context(|| format!("row {}: {name} = {cell:?} is not a number", r + 2))
            })
            .collect()
    }

    pub fn unsigned(&self, name: &str) -> Result<Vec<u64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row[c].trim();
                cell.parse::<u64>()
                    .with_context(|| format!("row {}: {name} = {cell:?} is not a count", r + 2))
            })
            .collect()
    }

    /// All columns except `skip`, parsed as numbers, row by row.
    pub fn numeric_rows_except(&self, skip: &[&str]) -> Result<Vec<Vec<f64>>> {
        let keep: Vec<usize> = (0..self.headers.len())
            .filter(|&c| !skip.contains(&self.headers[c].trim()))
            .collect();
        if keep.is_empty() {
            bail!("no numeric columns besides {skip:?}");
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                keep.iter()
                    .map(|&c| {
                        let cell = row[c].trim();
                        cell.parse::<f64>().with_context(|| {
                            format!("row {}: {} = {cell:?} is not a number", r + 2, self.headers[c])
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        bail!("{} has a header but no rows", path.display());
    }
    Ok(Table { headers, rows })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes `header` and `rows` as RFC 4180 CSV. Floats use Rust's shortest
/// round-trip formatting, so output is reproducible.
pub fn write_csv<H: AsRef<[u8]>, R: Serialize>(path: &Path, header: &[H], rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
