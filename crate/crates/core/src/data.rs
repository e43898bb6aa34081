//! Feature matrices and their on-disk formats.
//!
//! Two formats are read: CSV (one item per row, numeric columns, optional
//! header) and a raw little-endian binary layout:
//!
//! ```text
//! b"ADPP" | n: u32 | d: u32 | n*d f32 values, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KdppError, Result};
use crate::scalar::Scalar;

pub const F32BIN_MAGIC: &[u8; 4] = b"ADPP";

/// `n` points in `d` dimensions stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points<T> {
    n: usize,
    d: usize,
    values: Vec<T>,
}

impl<T: Scalar> Points<T> {
    pub fn new(n: usize, d: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * d {
            return Err(KdppError::InvalidInput(format!(
                "expected {} values for {n} points in {d} dimensions, got {}",
                n * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KdppError::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(KdppError::InvalidInput(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// First `n` points (used to build nested benchmark grids).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n);
        Self {
            n,
            d: self.d,
            values: self.values[..n * self.d].to_vec(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Points<U> {
        Points {
            n: self.n,
            d: self.d,
            values: self.values.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }
}

pub fn read_csv<T: Scalar>(path: &Path, has_header: bool) -> Result<Points<T>> {
    let file = File::open(path)?;
    read_csv_from(BufReader::new(file), has_header)
}

pub fn read_csv_from<T: Scalar, R: Read>(reader: R, has_header: bool) -> Result<Points<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map(T::of).map_err(|_| {
                    KdppError::InvalidInput(format!(
                        "record {line}, column {col}: {field:?} is not a number"
                    ))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Points::from_rows(&rows)
}

pub fn read_f32bin<T: Scalar>(path: &Path) -> Result<Points<T>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_f32bin(&bytes)
}

pub fn parse_f32bin<T: Scalar>(bytes: &[u8]) -> Result<Points<T>> {
    if bytes.len() < 12 || &bytes[..4] != F32BIN_MAGIC {
        return Err(KdppError::InvalidInput("missing ADPP header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| KdppError::InvalidInput("header size overflow".into()))?;
    if body.len() != expected {
        return Err(KdppError::InvalidInput(format!(
            "payload has {} bytes, header announces {n}x{d} f32 ({expected} bytes)",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Points::new(n, d, values)
}

pub fn write_f32bin<T: Scalar>(path: &Path, points: &Points<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(F32BIN_MAGIC)?;
    let to_u32 = |x: usize| {
        u32::try_from(x).map_err(|_| KdppError::InvalidInput(format!("{x} does not fit in u32")))
    };
    out.write_all(&to_u32(points.n())?.to_le_bytes())?;
    out.write_all(&to_u32(points.dim())?.to_le_bytes())?;
    for v in points.as_slice() {
        out.write_all(&(v.f64() as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv<T: Scalar>(path: &Path, points: &Points<T>, header: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if header {
        w.write_record((0..points.dim()).map(|j| format!("x{j}")))?;
    }
    for i in 0..points.n() {
        w.write_record(points.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
