//! Matrix, sample, and result-table I/O.
//!
//! Matrices travel as row-major CSV with no header and 17 significant
//! digits per entry (lossless for f64). Result tables are CSV with a
//! header row; manifests and single results are JSON.

use ndarray::Array2;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Format one value with 17 significant digits (round-trip exact).
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a matrix as headerless row-major CSV.
pub fn write_matrix_csv<P: AsRef<Path>>(path: P, y: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in y.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a headerless CSV matrix; every row must have the same width.
pub fn read_matrix_csv<P: AsRef<Path>>(path: P) -> Result<Array2<f64>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut data: Vec<f64> = Vec::new();
    let mut ncols = 0usize;
    let mut nrows = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let row: Vec<f64> = t
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Validation(format!("row {}: bad number {:?}", idx + 1, cell.trim()))
                })
            })
            .collect::<Result<_>>()?;
        if nrows == 0 {
            ncols = row.len();
        } else if row.len() != ncols {
            return Err(Error::Validation(format!(
                "row {} has {} columns, expected {ncols}",
                idx + 1,
                row.len()
            )));
        }
        data.extend(row);
        nrows += 1;
    }
    if nrows == 0 {
        return Err(Error::Validation("matrix file is empty".into()));
    }
    Array2::from_shape_vec((nrows, ncols), data)
        .map_err(|e| Error::Validation(format!("bad matrix shape: {e}")))
}

/// Read scalar samples from a whitespace- and/or comma-separated file.
pub fn read_samples<P: AsRef<Path>>(path: P) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut out = Vec::new();
    for tok in text.split(|c: char| c.is_whitespace() || c == ',') {
        if tok.is_empty() {
            continue;
        }
        let x: f64 = tok
            .parse()
            .map_err(|_| Error::Validation(format!("bad sample {tok:?}")))?;
        out.push(x);
    }
    if out.is_empty() {
        return Err(Error::Validation("sample file has no numbers".into()));
    }
    Ok(out)
}
