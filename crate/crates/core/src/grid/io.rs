//! Grid file format: one JSON header line, then `count` little-endian f64
//! values in row-major order (last axis fastest).
//!
//! Readers accept older headers with missing optional fields: `version`
//! defaults to 1, `n_dims` to the length of `shape`, `origin` to zeros and
//! `count` to the product of `shape`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GridField;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &str = "slaglab-grid";
pub const GRID_VERSION: u32 = 1;

#[derive(Serialize)]
struct Header<'a> {
    magic: &'a str,
    version: u32,
    n_dims: usize,
    shape: &'a [usize],
    origin: &'a [f64],
    spacing: f64,
    count: usize,
}

#[derive(Deserialize)]
struct RawHeader {
    magic: String,
    version: Option<u32>,
    n_dims: Option<usize>,
    shape: Vec<usize>,
    origin: Option<Vec<f64>>,
    spacing: f64,
    count: Option<usize>,
}

fn parse_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        offset,
        message: message.into(),
    })
}

pub fn field_to_bytes(field: &GridField) -> Vec<u8> {
    let header = Header {
        magic: GRID_MAGIC,
        version: GRID_VERSION,
        n_dims: field.n_dims(),
        shape: field.shape(),
        origin: field.origin(),
        spacing: field.spacing(),
        count: field.len(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(field.len() * 8);
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn field_from_bytes(bytes: &[u8]) -> Result<GridField> {
    let Some(nl) = bytes.iter().position(|&b| b == b'\n') else {
        return parse_err(bytes.len(), "header line is not terminated by a newline");
    };
    let raw: RawHeader = serde_json::from_slice(&bytes[..nl])
        .or_else(|e| parse_err(e.column().saturating_sub(1), format!("malformed header: {e}")))?;
    if raw.magic != GRID_MAGIC {
        return parse_err(0, format!("magic '{}' is not '{GRID_MAGIC}'", raw.magic));
    }
    let version = raw.version.unwrap_or(GRID_VERSION);
    if version != GRID_VERSION {
        return parse_err(0, format!("unsupported version {version}"));
    }
    let n_dims = raw.n_dims.unwrap_or(raw.shape.len());
    if n_dims != raw.shape.len() {
        return parse_err(0, format!("n_dims {n_dims} disagrees with shape {:?}", raw.shape));
    }
    let product: usize = raw.shape.iter().product();
    let count = raw.count.unwrap_or(product);
    if count != product {
        return parse_err(0, format!("count {count} differs from shape product {product}"));
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != count * 8 {
        return parse_err(
            nl + 1 + payload.len().min(count * 8),
            format!("payload holds {} bytes, expected {}", payload.len(), count * 8),
        );
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        if !v.is_finite() {
            return parse_err(nl + 1 + 8 * i, format!("non-finite value {v} at index {i}"));
        }
        values.push(v);
    }
    let origin = raw.origin.unwrap_or_else(|| vec![0.0; n_dims]);
    GridField::new(raw.shape, origin, raw.spacing, values).or_else(|e| parse_err(0, e.to_string()))
}

pub fn write_field(path: impl AsRef<Path>, field: &GridField) -> Result<()> {
    fs::write(path, field_to_bytes(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<GridField> {
    field_from_bytes(&fs::read(path)?)
}
