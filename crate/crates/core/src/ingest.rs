//! CSV ingestion: one object per line, comma-separated reals.
//!
//! The first non-empty line is treated as a header when any of its fields
//! fails to parse as a number. The dimension is taken from the first data
//! line; every later line must match it.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metric::Dataset;

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(reader));

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dimension = None;
    let mut seen_first = false;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let first = !seen_first;
        seen_first = true;
        let row = match parsed {
            Ok(row) => row,
            Err(_) if first => continue,
            Err(_) => {
                let bad = record.iter().find(|f| f.parse::<f64>().is_err()).unwrap_or("");
                return Err(Error::Parse {
                    line,
                    reason: format!("non-numeric field `{bad}`"),
                });
            }
        };
        if let Some(bad) = row.iter().find(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line,
                reason: format!("non-finite value {bad}"),
            });
        }
        match dimension {
            None => dimension = Some(row.len()),
            Some(dim) if dim != row.len() => {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected {dim} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let dimension = dimension.ok_or(Error::Empty("csv contains no data rows"))?;
    Dataset::with_dimension(dimension, rows)
}

/// Reads just the rows, for query files.
pub fn read_rows_path(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let ds = read_csv_path(path)?;
    Ok(ds.objects().iter().map(|o| o.coords.clone()).collect())
}

pub fn write_csv<W: Write>(mut out: W, rows: &[Vec<f64>]) -> Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
