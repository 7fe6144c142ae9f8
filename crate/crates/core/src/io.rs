//! Plain-text matrix formats and the heatmap image writer.
//!
//! Grid format: a header line "ROWS COLS" followed by ROWS lines of COLS
//! space-separated values. CSV is the same grid without a header, comma
//! separated. Floats are written with the shortest round-trip formatting,
//! so write → read → write is byte-stable.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{CovotError, Result};
use crate::features::{FeatureSet, Role};

fn bad_line(line: usize, message: impl Into<String>) -> CovotError {
    CovotError::InvalidFormat {
        line,
        message: message.into(),
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| bad_line(line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(bad_line(line, format!("non-finite value: {tok:?}")));
    }
    Ok(v)
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, cols: usize) -> Array2<f64> {
    let r = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((r, cols), flat).expect("row lengths checked during parse")
}

/// Parses the headered grid format ("ROWS COLS" then the rows).
pub fn parse_matrix_text(text: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad_line(1, "empty input, expected a ROWS COLS header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(bad_line(1, format!("header must be ROWS COLS, got {header:?}")));
    }
    let m: usize = dims[0]
        .parse()
        .map_err(|_| bad_line(1, format!("bad row count: {:?}", dims[0])))?;
    let n: usize = dims[1]
        .parse()
        .map_err(|_| bad_line(1, format!("bad column count: {:?}", dims[1])))?;
    if m == 0 || n == 0 {
        return Err(bad_line(1, "dimensions must be positive"));
    }

    let mut rows = Vec::with_capacity(m);
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            if rows.len() == m {
                continue; // trailing blank lines are tolerated
            }
            return Err(bad_line(line_no, "blank line inside the matrix body"));
        }
        if rows.len() == m {
            return Err(bad_line(line_no, format!("expected {m} rows, found more")));
        }
        let vals: Vec<f64> = raw
            .split_whitespace()
            .map(|t| parse_value(t, line_no))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(bad_line(
                line_no,
                format!("expected {n} values, got {}", vals.len()),
            ));
        }
        rows.push(vals);
    }
    if rows.len() != m {
        return Err(bad_line(
            text.lines().count(),
            format!("expected {m} rows, got {}", rows.len()),
        ));
    }
    Ok(rows_to_matrix(rows, n))
}

pub fn format_matrix_text(mat: &Array2<f64>) -> String {
    let (m, n) = mat.dim();
    let mut out = format!("{m} {n}\n");
    for row in mat.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&v.to_string());
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix_text(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    parse_matrix_text(&fs::read_to_string(path)?)
}

pub fn write_matrix_text(path: impl AsRef<Path>, mat: &Array2<f64>) -> Result<()> {
    fs::write(path, format_matrix_text(mat))?;
    Ok(())
}

/// Parses headerless comma-separated rows; the first row fixes the width.
pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = raw
            .split(',')
            .map(|t| parse_value(t.trim(), line_no))
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            cols = vals.len();
        } else if vals.len() != cols {
            return Err(bad_line(
                line_no,
                format!("expected {cols} values, got {}", vals.len()),
            ));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(bad_line(1, "empty input"));
    }
    Ok(rows_to_matrix(rows, cols))
}

pub fn format_matrix_csv(mat: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in mat.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&v.to_string());
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_csv(path: impl AsRef<Path>, mat: &Array2<f64>) -> Result<()> {
    fs::write(path, format_matrix_csv(mat))?;
    Ok(())
}

/// Reads a feature table (grid format, header "COUNT DIM") into the given
/// role. Vectors are taken as stored; no normalization happens here.
pub fn read_features_text(path: impl AsRef<Path>, role: Role) -> Result<FeatureSet> {
    FeatureSet::new(read_matrix_text(path)?, role)
}

pub fn write_features_text(path: impl AsRef<Path>, features: &FeatureSet) -> Result<()> {
    write_matrix_text(path, &features.vectors().to_owned())
}

/// Renders a value grid as a binary 8-bit PGM (P5), min–max normalized to
/// 0..=255. A constant grid maps to mid-gray 128.
pub fn format_pgm(values: &Array2<f64>) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CovotError::Numerical {
            context: "heatmap contains a non-finite value",
        });
    }
    let (h, w) = values.dim();
    if h == 0 || w == 0 {
        return Err(CovotError::invalid("heatmap", "must be non-empty"));
    }
    let mn = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mx = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    if mx > mn {
        let scale = 255.0 / (mx - mn);
        bytes.extend(values.iter().map(|&v| ((v - mn) * scale).round() as u8));
    } else {
        bytes.extend(std::iter::repeat_n(128u8, h * w));
    }
    Ok(bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, values: &Array2<f64>) -> Result<()> {
    fs::write(path, format_pgm(values)?)?;
    Ok(())
}
