//! Matrix text and binary formats.
//!
//! CSV: one matrix row per line, values comma-separated, each printed with
//! 17 significant digits so the text round-trips every `f64` exactly.
//!
//! Binary: `rows: u64 LE`, `cols: u64 LE`, then `rows·cols` little-endian
//! `f64` values in row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::Matrix;

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    let mut line = String::new();
    for r in 0..m.rows() {
        line.clear();
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(mut r: R) -> Result<Matrix> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        if !line.trim().is_empty() {
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format {
                    field: "csv value",
                    offset,
                    detail: e.to_string(),
                })?;
            rows.push(row);
        }
        offset += line.len() as u64 + 1;
    }
    Matrix::from_rows(&rows)
}

pub fn write_binary<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Matrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let header = |at: usize, field: &'static str| -> Result<u64> {
        let raw = bytes.get(at..at + 8).ok_or_else(|| Error::Format {
            field,
            offset: at as u64,
            detail: "file ends inside the header".into(),
        })?;
        Ok(u64::from_le_bytes(raw.try_into().expect("8-byte slice")))
    };
    let rows = header(0, "rows")? as usize;
    let cols = header(8, "cols")? as usize;
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format {
            field: "cols",
            offset: 8,
            detail: format!("dimensions {rows}x{cols} overflow"),
        })?;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Format {
            field: "values",
            offset: 16,
            detail: format!("expected {need} bytes for {rows}x{cols}, found {}", body.len()),
        });
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::new(rows, cols, data)
}
