//! Matrix and data file formats, and config fingerprints.
//!
//! Matrices are stored either as CSV (first line p, then p rows of p
//! comma-separated values) or as binary (`TCOV`, little-endian u64 p, then
//! p² little-endian f64 in row-major order). Both round-trip bit-exactly for
//! finite values.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{CovMatrix, DataMatrix};

pub const BIN_MAGIC: &[u8; 4] = b"TCOV";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "bin" => Ok(MatrixFormat::Bin),
            other => Err(Error::Parse(format!("unknown matrix format `{other}`"))),
        }
    }
}

fn join_row<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    let parts: Vec<String> = vals.map(|v| v.to_string()).collect();
    parts.join(",")
}

pub fn write_matrix_csv<W: Write>(mut w: W, m: &CovMatrix) -> Result<()> {
    let p = m.p();
    writeln!(w, "{p}")?;
    for i in 0..p {
        // symmetric, so column i is row i
        writeln!(w, "{}", join_row(m.column(i).iter()))?;
    }
    Ok(())
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {lineno}: `{}` is not a number", t.trim())))
        })
        .collect()
}

fn content_lines<R: Read>(r: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    BufReader::new(r)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            l.as_ref()
                .map(|s| !s.trim().is_empty() && !s.starts_with('#'))
                .unwrap_or(true)
        })
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<CovMatrix> {
    let mut lines = content_lines(r);
    let (ln, first) = lines.next().ok_or(Error::EmptyInput)?;
    let first = first?;
    let p: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {ln}: expected the dimension p, found `{first}`")))?;
    let mut vals = Vec::with_capacity(p * p);
    let mut rows = 0;
    for (ln, line) in lines {
        let row = parse_row(&line?, ln)?;
        if row.len() != p {
            return Err(Error::Parse(format!("line {ln}: expected {p} values, found {}", row.len())));
        }
        vals.extend(row);
        rows += 1;
    }
    if rows != p {
        return Err(Error::Parse(format!("expected {p} rows, found {rows}")));
    }
    let m = DMatrix::from_row_slice(p, p, &vals);
    if m != m.transpose() {
        return Err(Error::Parse("matrix is not symmetric".into()));
    }
    CovMatrix::new(m)
}

pub fn write_matrix_bin<W: Write>(mut w: W, m: &CovMatrix) -> Result<()> {
    let p = m.p();
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(p as u64).to_le_bytes())?;
    for i in 0..p {
        for v in m.column(i) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_bin<R: Read>(mut r: R) -> Result<CovMatrix> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| Error::Parse("binary matrix header is truncated".into()))?;
    if &head[..4] != BIN_MAGIC {
        return Err(Error::Parse("missing TCOV magic".into()));
    }
    let p = u64::from_le_bytes(head[4..12].try_into().expect("8 bytes")) as usize;
    let len = p
        .checked_mul(p)
        .ok_or_else(|| Error::Parse("matrix dimension overflows".into()))?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != len * 8 {
        return Err(Error::Parse(format!(
            "expected {} bytes of matrix data, found {}",
            len * 8,
            buf.len()
        )));
    }
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let m = DMatrix::from_row_slice(p, p, &vals);
    if m != m.transpose() {
        return Err(Error::Parse("matrix is not symmetric".into()));
    }
    CovMatrix::new(m)
}

/// Reads a matrix file, detecting the binary format by its magic.
pub fn read_matrix(path: &Path) -> Result<CovMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BIN_MAGIC) {
        read_matrix_bin(&bytes[..])
    } else {
        read_matrix_csv(&bytes[..])
    }
}

pub fn write_matrix(path: &Path, m: &CovMatrix, format: MatrixFormat) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        MatrixFormat::Csv => write_matrix_csv(&mut buf, m)?,
        MatrixFormat::Bin => write_matrix_bin(&mut buf, m)?,
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Data CSV: one observation per line, `#` comment lines ignored.
pub fn read_data_csv<R: Read>(r: R) -> Result<DataMatrix> {
    let mut rows = Vec::new();
    for (ln, line) in content_lines(r) {
        rows.push(parse_row(&line?, ln)?);
    }
    if let Some(first) = rows.first() {
        let p = first.len();
        if let Some(pos) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Parse(format!(
                "observation {} has {} values, expected {p}",
                pos + 1,
                rows[pos].len()
            )));
        }
    }
    DataMatrix::from_rows(&rows)
}

pub fn write_data_csv<W: Write>(mut w: W, data: &DataMatrix) -> Result<()> {
    for m in 0..data.n() {
        writeln!(w, "{}", join_row(data.row(m).iter()))?;
    }
    Ok(())
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Comment line recording the hash of the config an output came from.
pub fn provenance_line(config_text: &str) -> String {
    format!("# config-sha256: {}", sha256_hex(config_text.as_bytes()))
}
