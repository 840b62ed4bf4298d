//! On-disk formats: the LSF1 binary field file and the plain-text
//! `key=value` preset format for shapes.
//!
//! LSF1 layout, all little-endian:
//!   8 bytes  magic "LSFIELD1"
//!   3 x u64  dims
//!   3 x f64  origin
//!   1 x f64  spacing h
//!   dims[0]*dims[1]*dims[2] x f64 values, x-fastest

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{LsfError, Result};
use crate::grid::{ScalarField, UniformGrid};

const MAGIC: &[u8; 8] = b"LSFIELD1";
const HEADER_LEN: usize = 8 + 3 * 8 + 3 * 8 + 8;

/// Hard cap on node count when decoding untrusted input (8 GiB of f64).
const MAX_NODES: u64 = 1 << 30;

pub fn write_lsf1<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for &d in &field.grid.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &o in &field.grid.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&field.grid.h.to_le_bytes())?;
    for &v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_lsf1<R: Read>(mut r: R) -> Result<ScalarField> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| LsfError::Format("truncated LSF1 header".into()))?;
    parse_lsf1_header(&header).and_then(|grid| {
        let count = grid.node_count();
        // grow as bytes actually arrive so a huge dims header on a short
        // stream fails without a giant up-front allocation
        let mut values = Vec::new();
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| LsfError::Format("truncated LSF1 payload".into()))?;
            values.push(f64::from_le_bytes(buf));
        }
        ScalarField::new(grid, values)
    })
}

fn parse_lsf1_header(header: &[u8; HEADER_LEN]) -> Result<UniformGrid> {
    if &header[..8] != MAGIC {
        return Err(LsfError::Format("bad LSF1 magic".into()));
    }
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let dims_u = [u64_at(8), u64_at(16), u64_at(24)];
    let total = dims_u[0]
        .checked_mul(dims_u[1])
        .and_then(|t| t.checked_mul(dims_u[2]))
        .ok_or_else(|| LsfError::Format("LSF1 dims overflow".into()))?;
    if total > MAX_NODES {
        return Err(LsfError::Format(format!("LSF1 node count {total} too large")));
    }
    let dims = [dims_u[0] as usize, dims_u[1] as usize, dims_u[2] as usize];
    let origin = [f64_at(32), f64_at(40), f64_at(48)];
    if origin.iter().any(|o| !o.is_finite()) {
        return Err(LsfError::Format("non-finite LSF1 origin".into()));
    }
    let h = f64_at(56);
    if !h.is_finite() {
        return Err(LsfError::Format("non-finite LSF1 spacing".into()));
    }
    UniformGrid::new(dims, origin, h).map_err(|e| LsfError::Format(e.to_string()))
}

/// Decode an in-memory LSF1 byte slice.
pub fn read_lsf1_bytes(bytes: &[u8]) -> Result<ScalarField> {
    read_lsf1(bytes)
}

pub fn write_lsf1_file(field: &ScalarField, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_lsf1(field, std::io::BufWriter::new(f))
}

pub fn read_lsf1_file(path: &Path) -> Result<ScalarField> {
    let f = std::fs::File::open(path)?;
    read_lsf1(std::io::BufReader::new(f))
}

/// Parse the plain-text preset format: one `key = value` pair per line,
/// `#` comments, a mandatory `kind = <shape>` line, every other key a
/// named f64 parameter.
pub fn parse_preset(text: &str) -> Result<(String, Vec<(String, f64)>)> {
    let mut kind: Option<String> = None;
    let mut params = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            LsfError::Format(format!("preset line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(LsfError::Format(format!("preset line {}: empty key", lineno + 1)));
        }
        if key == "kind" {
            if kind.is_some() {
                return Err(LsfError::Format("duplicate kind line".into()));
            }
            kind = Some(value.to_string());
        } else {
            let v: f64 = value.parse().map_err(|_| {
                LsfError::Format(format!("preset line {}: bad number {value:?}", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(LsfError::Format(format!(
                    "preset line {}: non-finite value",
                    lineno + 1
                )));
            }
            params.push((key.to_string(), v));
        }
    }
    let kind = kind.ok_or_else(|| LsfError::Format("preset missing kind".into()))?;
    Ok((kind, params))
}
