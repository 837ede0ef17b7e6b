//! CSV input. The first row is a header; regression files use the first two
//! columns as (x, y), density files the first column.

use std::fmt::Write as _;
use std::path::Path;

use frcb_core::estimators::Sample;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Regression,
    Density,
}

pub fn ingest_csv(path: &Path, kind: DataKind) -> Result<Sample> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, path, kind)
}

pub fn ingest_reader(reader: impl std::io::Read, path: &Path, kind: DataKind) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let columns = match kind {
        DataKind::Regression => 2,
        DataKind::Density => 1,
    };
    let parse_err = |line: u64, message: String| CliError::Parse { path: path.to_path_buf(), line, message };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.len() < columns {
        return Err(parse_err(1, format!("expected at least {columns} column(s) in the header")));
    }

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let field = |i: usize| -> Result<f64> {
            let text = record.get(i).ok_or_else(|| parse_err(line, format!("missing column {}", i + 1)))?;
            let v: f64 = text.parse().map_err(|_| parse_err(line, format!("`{text}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::NonFiniteValue { path: path.to_path_buf(), line })
            }
        };
        xs.push(field(0)?);
        if kind == DataKind::Regression {
            ys.push(field(1)?);
        }
    }
    if xs.is_empty() {
        return Err(CliError::EmptyData(path.to_path_buf()));
    }
    Ok(match kind {
        DataKind::Regression => Sample::regression(xs, ys)?,
        DataKind::Density => Sample::density(xs)?,
    })
}

/// Writes a sample back out in its stored (x-sorted) order.
pub fn sample_to_csv(sample: &Sample) -> String {
    let mut out = String::new();
    match sample.ys() {
        Some(ys) => {
            out.push_str("x,y\n");
            for (x, y) in sample.xs().iter().zip(ys) {
                let _ = writeln!(out, "{x},{y}");
            }
        }
        None => {
            out.push_str("x\n");
            for x in sample.xs() {
                let _ = writeln!(out, "{x}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, kind: DataKind) -> Result<Sample> {
        ingest_reader(text.as_bytes(), Path::new("mem.csv"), kind)
    }

    #[test]
    fn two_rows_parse() {
        let s = read("x,y\n1,2\n3,4\n", DataKind::Regression).unwrap();
        assert_eq!(s.n(), 2);
    }

    #[test]
    fn nan_reports_line() {
        match read("x,y\n1,2\n3,NaN\n", DataKind::Regression) {
            Err(CliError::NonFiniteValue { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        match read("x,y\n1,2\n3,4\nfive,6\n", DataKind::Regression) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_short_files() {
        assert!(matches!(read("x,y\n", DataKind::Regression), Err(CliError::EmptyData(_))));
        assert!(matches!(read("x\n1\n", DataKind::Regression), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn unsorted_input_round_trips_sorted() {
        let s = read("x,y\n3,30\n1,10\n2,20\n", DataKind::Regression).unwrap();
        assert_eq!(sample_to_csv(&s), "x,y\n1,10\n2,20\n3,30\n");
        let again = read(&sample_to_csv(&s), DataKind::Regression).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn density_uses_first_column() {
        let s = read("value,label\n2.5,a\n-1,b\n", DataKind::Density).unwrap();
        assert!(s.is_density());
        assert_eq!(s.xs(), &[-1.0, 2.5]);
    }
}
