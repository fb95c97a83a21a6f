//! CSV input and output. Comma separated, header required, `.` decimal.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::margins::{GpdFitSet, GpdParams};
use crate::matrix::{DataMatrix, Matrix};

/// Numeric matrix from CSV text. Rows and columns in errors are 1-based
/// data positions (the header is not counted).
pub fn read_matrix_from(r: impl Read) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(r);
    let cols = reader.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != cols {
            return Err(Error::Parse {
                row: i + 1,
                column: record.len().min(cols) + 1,
                message: format!("expected {cols} fields, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::domain("CSV has a header but no data rows"));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    read_matrix_from(File::open(path)?)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes a header and rows of displayable fields.
pub fn write_table<W: Write>(
    w: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_table_file(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = create(path)?;
    write_table(&mut w, header, rows)?;
    w.flush()?;
    Ok(())
}

pub const FITS_HEADER: [&str; 4] = ["margin", "threshold", "sigma", "xi"];

pub fn write_fits(path: &Path, fits: &GpdFitSet) -> Result<()> {
    let rows = fits.margins.iter().enumerate().map(|(j, m)| {
        vec![
            (j + 1).to_string(),
            m.threshold.to_string(),
            m.params.sigma.to_string(),
            m.params.xi.to_string(),
        ]
    });
    write_table_file(path, &FITS_HEADER, rows)
}

/// Per-margin `(threshold, params)` from a sidecar written by [`write_fits`].
pub fn read_fits(path: &Path) -> Result<Vec<(f64, GpdParams)>> {
    let m = read_matrix(path)?;
    if m.cols() != FITS_HEADER.len() {
        return Err(Error::Parse {
            row: 0,
            column: m.cols(),
            message: format!("fits sidecar needs columns {}", FITS_HEADER.join(",")),
        });
    }
    m.row_iter()
        .map(|r| Ok((r[1], GpdParams::new(r[2], r[3])?)))
        .collect()
}
