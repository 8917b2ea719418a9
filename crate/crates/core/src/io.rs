//! Plain-text formats: headerless numeric CSV for matrices, and the
//! 12-significant-digit number format used by every CSV writer.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `x` with 12 significant digits, in the style of C's `%.12g`.
pub fn fmt_sig12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Parse a headerless comma-separated matrix. Blank lines are skipped; every
/// row must have the same number of fields.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse(format!(
                    "line {}: expected {c} fields, found {}",
                    lineno + 1,
                    fields.len()
                )))
            }
            _ => {}
        }
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: '{f}' is not a number", lineno + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_sig12(m[(r, c)]));
        }
        let _ = writeln!(out);
    }
    out
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_csv(&text)
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}
