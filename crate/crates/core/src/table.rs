//! CSV tables with an `x1..xU,t1..tV` header.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// What a table must contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableRole {
    /// At least one `t` column is required.
    InputsAndTargets,
    /// `t` columns are optional.
    Inputs,
}

/// Inputs (one sample per row) and targets if the file has `t` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub inputs: DMatrix<f64>,
    pub targets: Option<DMatrix<f64>>,
}

/// Splits a header into `(U, V)`, requiring `x1..xU` followed by `t1..tV`.
fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<(usize, usize)> {
    let err = |message: String| Error::Header {
        path: path.to_path_buf(),
        message,
    };
    let mut u = 0;
    let mut v = 0;
    for (k, name) in header.iter().enumerate() {
        let name = name.trim();
        let expect = if v == 0 && name.starts_with('x') {
            u += 1;
            format!("x{u}")
        } else {
            v += 1;
            format!("t{v}")
        };
        if name != expect {
            return Err(err(format!("column {} is {name:?}, expected {expect:?}", k + 1)));
        }
    }
    if u == 0 {
        return Err(err("no input columns (x1, x2, ...)".into()));
    }
    Ok((u, v))
}

/// Reads a table. Row and column numbers in errors are 1-based, with row 1 the header.
pub fn load_table(path: &Path, role: TableRole) -> Result<Table> {
    let io = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::Header {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (u, v) = parse_header(path, header)?;
    if role == TableRole::InputsAndTargets && v == 0 {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: "no target columns (t1, t2, ...)".into(),
        });
    }
    let width = u + v;
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: c + 1,
                message,
            };
            let x: f64 = cell.parse().map_err(|_| parse_err(format!("{cell:?} is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(format!("{cell:?} is not finite")));
            }
            values.push(x);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    let all = DMatrix::from_row_slice(rows, width, &values);
    Ok(Table {
        inputs: all.columns(0, u).into_owned(),
        targets: (v > 0).then(|| all.columns(u, v).into_owned()),
    })
}

/// Writes `columns` as a CSV with the given header, one row per matrix row.
/// Values use Rust's shortest round-trip formatting.
pub fn write_csv(path: &Path, header: &[String], data: &DMatrix<f64>) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let from_csv = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => io(e),
        other => Error::InvalidArgument(format!("{}: {other:?}", path.display())),
    };
    if header.len() != data.ncols() {
        return Err(Error::InvalidArgument("header and data widths differ".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(from_csv)?;
    w.write_record(header).map_err(from_csv)?;
    for i in 0..data.nrows() {
        w.write_record(data.row(i).iter().map(|x| x.to_string())).map_err(from_csv)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// `x1..xU,t1..tV`
pub fn standard_header(u: usize, v: usize) -> Vec<String> {
    (1..=u)
        .map(|k| format!("x{k}"))
        .chain((1..=v).map(|k| format!("t{k}")))
        .collect()
}
