//! Field import/export: CSV `(index coordinates, value)` and a raw
//! little-endian format with a small header.
//!
//! Raw layout: magic `b"LTF1"`, `u32` dim, `u32` N, `f64` Lbox, then `N^dim`
//! `f64` values in row-major order, all little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ScalarField, TorusGrid};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"LTF1";

pub fn write_csv(f: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, csv_string(f)).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_string(f: &ScalarField) -> String {
    let g = f.grid();
    let mut out = String::new();
    if g.dim() == 1 {
        out.push_str("i0,value\n");
    } else {
        out.push_str("i0,i1,value\n");
    }
    for (flat, v) in f.values().iter().enumerate() {
        let [i, j] = g.index(flat);
        if g.dim() == 1 {
            out.push_str(&format!("{i},{v:.16e}\n"));
        } else {
            out.push_str(&format!("{i},{j},{v:.16e}\n"));
        }
    }
    out
}

/// Reads a field written by [`write_csv`]; the grid must be supplied since
/// the CSV carries indices only.
pub fn read_csv(path: &Path, grid: TorusGrid) -> Result<ScalarField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = vec![f64::NAN; grid.len()];
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != grid.dim() + 1 {
            return Err(Error::Format(format!("line {}: expected {} columns", lineno + 1, grid.dim() + 1)));
        }
        let parse_idx = |s: &str| -> Result<usize> {
            let i: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad index `{s}`", lineno + 1)))?;
            if i >= grid.n() {
                return Err(Error::Format(format!("line {}: index {i} out of range", lineno + 1)));
            }
            Ok(i)
        };
        let i = parse_idx(cols[0])?;
        let j = if grid.dim() == 2 { parse_idx(cols[1])? } else { 0 };
        let v: f64 = cols[grid.dim()]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad value", lineno + 1)))?;
        values[grid.flat([i, j])] = v;
    }
    ScalarField::from_values(grid, values)
}

pub fn write_raw(f: &ScalarField, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&raw_bytes(f)).map_err(|e| Error::io(path, e))
}

/// The raw encoding written by [`write_raw`].
pub fn raw_bytes(f: &ScalarField) -> Vec<u8> {
    let g = f.grid();
    let mut buf = Vec::with_capacity(20 + 8 * g.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.n() as u32).to_le_bytes());
    buf.extend_from_slice(&g.lbox().to_le_bytes());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn read_raw(path: &Path) -> Result<ScalarField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing raw field header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let dim = u32_at(4);
    let n = u32_at(8);
    let lbox = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let grid = TorusGrid::new(dim, n, lbox)?;
    let body = &bytes[20..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "raw field body has {} bytes, expected {}",
            body.len(),
            8 * grid.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_and_raw_round_trip(seed in 0u64..1000, dim in 1usize..=2, lbox in 0.5f64..10.0) {
            let g = TorusGrid::new(dim, 8, lbox).unwrap();
            let f = crate::random::band_limited_field(g, 2, seed).scaled(1e3);
            let dir = tempfile::tempdir().unwrap();
            let raw = dir.path().join("f.bin");
            write_raw(&f, &raw).unwrap();
            prop_assert_eq!(read_raw(&raw).unwrap(), f.clone());
            let csv = dir.path().join("f.csv");
            write_csv(&f, &csv).unwrap();
            prop_assert_eq!(read_csv(&csv, g).unwrap(), f);
        }
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"LTF1\x02\0\0\0").unwrap();
        assert!(read_raw(&p).is_err());
    }
}
