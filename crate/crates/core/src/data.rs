//! Datasets and numeric CSV files.
//!
//! Files are comma separated with one header row and no quoting. Numbers are
//! written with 17 significant digits so values survive a round trip.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::config::fmt_f64;
use crate::error::{Error, Result};

/// Training inputs (one row per point) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let d = Dataset { x, y };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(Error::InvalidSpec("dataset is empty".into()));
        }
        if self.x.nrows() != self.y.len() {
            return Err(Error::DimensionMismatch { expected: self.x.nrows(), got: self.y.len() });
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("dataset has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.x.ncols()
    }

    /// Parses `x0,...,x{d-1},y` rows.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let (header, rows) = parse_numeric_csv(text)?;
        if header.len() < 2 {
            return Err(Error::Parse(
                "training CSV needs at least one input column and a target column".into(),
            ));
        }
        let d = header.len() - 1;
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[d]));
        Dataset::new(x, y).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let d = self.d_in();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let mut fields: Vec<String> = self.x.row(i).iter().map(|v| fmt_f64(*v)).collect();
            fields.push(fmt_f64(self.y[i]));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses a header row plus rows of numbers, all rows the header's width.
/// Errors name the 1-based line.
pub fn parse_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("line 1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse("line 1: missing header row".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("line {line}: invalid number '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("CSV has a header but no data rows".into()));
    }
    Ok((header, rows))
}

/// Reads a points file: every column is an input coordinate.
pub fn points_from_csv_str(text: &str) -> Result<DMatrix<f64>> {
    let (header, rows) = parse_numeric_csv(text)?;
    Ok(DMatrix::from_fn(rows.len(), header.len(), |i, j| rows[i][j]))
}

pub fn points_to_csv_string(x: &DMatrix<f64>) -> String {
    let header: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in x.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let text = "x0,x1,y\n0.1,0.2,1\n-3,4e-3,2.5\n";
        let d = Dataset::from_csv_str(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.d_in(), 2);
        assert_eq!(d.x[(1, 1)], 4e-3);
        assert_eq!(Dataset::from_csv_str(&d.to_csv_string()).unwrap(), d);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = Dataset::from_csv_str("x0,y\n1,2\n3,abc\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = points_from_csv_str("x0,x1\n1,2\n3\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(points_from_csv_str("x0\n").is_err());
        assert!(Dataset::from_csv_str("y\n1\n").is_err());
        assert!(points_from_csv_str("x0\nNaN\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "a\n").unwrap();
        write_atomic(&p, "b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b\n");
    }
}
