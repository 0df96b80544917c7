//! Plain CSV reading and writing for numeric columns.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! re-parses to the identical `f64`.

use std::io::{BufRead, Write};

use crate::error::{invalid, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads the last column of a CSV stream as floats. A first line that does
/// not parse is treated as a header; blank lines are skipped.
pub fn read_last_column<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => return Err(invalid(format!("line {}: non-finite value {v}", lineno + 1))),
            Err(_) if lineno == 0 => continue,
            Err(_) => {
                return Err(invalid(format!("line {}: cannot parse '{field}'", lineno + 1)));
            }
        }
    }
    Ok(values)
}

/// Writes a header and rows of floats.
pub fn write_rows<W: Write>(mut out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let fields: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes `index,value` rows with a 1-based index.
pub fn write_indexed<W: Write>(mut out: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, fmt_f64(*v))?;
    }
    Ok(())
}
