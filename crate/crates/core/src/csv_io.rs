//! Plain CSV matrices: comma separated, no header, one row per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Significant digits written per value.
pub const SIGNIFICANT_DIGITS: i32 = 17;

/// Formats `x` in plain decimal notation with [`SIGNIFICANT_DIGITS`]
/// significant digits, which round-trips every finite `f64`.
pub fn format_value(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| format_value(x)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Parses CSV text; blank lines are skipped and every row must have the
/// same number of fields.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("invalid number {field:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(format!(
                    "expected {} fields, found {}",
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: "no data rows".into(),
        });
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}
