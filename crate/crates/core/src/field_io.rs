//! Field snapshot files.
//!
//! Binary layout (all little-endian): the 5 ASCII bytes `NSAF1`, then
//! `n: u64`, `N: u64`, `L: f64`, `rank: u64` (0 scalar, 1 vector, 2 tensor),
//! `t: f64`, followed by the samples as `f64`, component by component, each
//! row-major over the grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Field, Rank};
use crate::grid::Grid;

pub const MAGIC: &[u8; 5] = b"NSAF1";

/// Header of a snapshot file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub dim: u64,
    pub points: u64,
    pub half_extent: f64,
    pub rank: Rank,
    pub time: f64,
}

pub fn write_field<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u64).to_le_bytes())?;
    w.write_all(&(g.points() as u64).to_le_bytes())?;
    w.write_all(&g.half_extent().to_le_bytes())?;
    w.write_all(&field.rank().code().to_le_bytes())?;
    w.write_all(&field.time().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), msg: msg.into() }
}

pub fn read_header_from<R: Read>(r: &mut R, path: &Path) -> Result<SnapshotHeader> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let dim = read_u64(r)?;
    let points = read_u64(r)?;
    let half_extent = read_f64(r)?;
    let rank = Rank::from_code(read_u64(r)?).ok_or_else(|| format_err(path, "bad rank code"))?;
    let time = read_f64(r)?;
    Ok(SnapshotHeader { dim, points, half_extent, rank, time })
}

pub fn save_field(field: &Field, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<SnapshotHeader> {
    let mut r = BufReader::new(File::open(path)?);
    read_header_from(&mut r, path)
}

pub fn load_field(path: &Path) -> Result<Field> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header_from(&mut r, path)?;
    let grid =
        Grid::new(h.dim as usize, h.half_extent, h.points as usize).map_err(|e| format_err(path, e.to_string()))?;
    let count = grid.len() * h.rank.components(grid.dim());
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Field::new(grid, h.rank, values, h.time).map_err(|e| format_err(path, e.to_string()))
}

/// CSV export: one row per node, columns `x1..xn` then the components.
pub fn write_csv<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let g = field.grid();
    let dim = g.dim();
    let ncomp = field.n_components();
    let mut header: Vec<String> = (1..=dim).map(|a| format!("x{a}")).collect();
    header.extend((0..ncomp).map(|c| format!("c{c}")));
    writeln!(w, "{}", header.join(","))?;
    for k in 0..g.len() {
        let x = g.point(k);
        let mut row: Vec<String> = x[..dim].iter().map(|v| format!("{v}")).collect();
        row.extend((0..ncomp).map(|c| format!("{:e}", field.component(c)[k])));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let g = Grid::make(2, 4.0, 8).unwrap();
        let f = Field::from_fn(g, 2.5, |x| x[0] - x[1]).unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"NSAF1");
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[13..21].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(buf[21..29].try_into().unwrap()), 4.0);
        assert_eq!(u64::from_le_bytes(buf[29..37].try_into().unwrap()), 0);
        assert_eq!(f64::from_le_bytes(buf[37..45].try_into().unwrap()), 2.5);
        assert_eq!(buf.len(), 45 + 64 * 8);
        assert_eq!(f64::from_le_bytes(buf[45..53].try_into().unwrap()), 0.0);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::make(2, 4.0, 8).unwrap();
        let f = Field::vector(g, vec![vec![1.5; 64], (0..64).map(|i| i as f64).collect()], 3.0).unwrap();
        let p = dir.path().join("u.nsaf");
        save_field(&f, &p).unwrap();
        assert_eq!(load_field(&p).unwrap(), f);
        let h = read_header(&p).unwrap();
        assert_eq!(h.rank, Rank::Vector);
        assert_eq!(h.time, 3.0);
    }

    #[test]
    fn csv_columns() {
        let g = Grid::new(1, 1.0, 2).unwrap();
        let f = Field::scalar(g, vec![1.0, 2.0], 0.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "x1,c0");
        assert_eq!(s.lines().count(), 3);
    }
}
