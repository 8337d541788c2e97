//! Text dumps of run artifacts.

use std::fmt::Write as _;
use std::path::Path;

use super::report::Report;
use crate::coeffs::MomentTable;
use crate::error::{Error, Result};
use crate::field_io::{load_field, read_header, MAGIC};

/// What to print.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Chosen from the file contents.
    Auto,
    /// Snapshot header.
    Header,
    /// Snapshot values along the line through the box centre parallel to `axis`.
    Field {
        axis: usize,
    },
    Coeffs,
    Fits,
}

fn is_snapshot(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut magic = [0u8; 5];
    let mut f = std::fs::File::open(path)?;
    Ok(f.read(&mut magic)? == magic.len() && &magic == MAGIC)
}

fn unknown(path: &Path) -> Error {
    Error::Format { path: path.into(), msg: "unknown artifact".into() }
}

pub fn inspect(path: &Path, view: View) -> Result<String> {
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!("{}: no such file", path.display())));
    }
    let view = match view {
        View::Auto if is_snapshot(path)? => View::Header,
        View::Auto => match path.file_name().and_then(|n| n.to_str()) {
            Some(n) if n.starts_with("coefficients") => View::Coeffs,
            Some(n) if n.starts_with("report") => View::Fits,
            _ => return Err(unknown(path)),
        },
        v => v,
    };
    match view {
        View::Header => header(path),
        View::Field { axis } => slice(path, axis),
        View::Coeffs => coeffs(path),
        View::Fits => fits(path),
        View::Auto => unreachable!("resolved above"),
    }
}

fn header(path: &Path) -> Result<String> {
    let h = read_header(path)?;
    Ok(format!("n = {}\nN = {}\nL = {}\nrank = {:?}\nt = {}\n", h.dim, h.points, h.half_extent, h.rank, h.time))
}

fn slice(path: &Path, axis: usize) -> Result<String> {
    let f = load_field(path)?;
    let g = *f.grid();
    if axis >= g.dim() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range for a {}-d field", g.dim())));
    }
    let n = g.points();
    let mid = n / 2;
    let mut out = format!("x{}", axis + 1);
    for c in 0..f.n_components() {
        let _ = write!(out, ",c{c}");
    }
    out.push('\n');
    for i in 0..n {
        let mut idx = vec![mid; g.dim()];
        idx[axis] = i;
        let flat = idx.iter().fold(0, |acc, &k| acc * n + k);
        let _ = write!(out, "{:.10e}", g.node(i));
        for c in 0..f.n_components() {
            let _ = write!(out, ",{:.17e}", f.component(c)[flat]);
        }
        out.push('\n');
    }
    Ok(out)
}

fn coeffs(path: &Path) -> Result<String> {
    let table = MomentTable::load_json(path).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
    Ok(table.to_csv())
}

fn fits(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let report: Report =
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
    let mut out = String::from("quantity,subtracted,q,b,a,c,rms,samples,best\n");
    for s in &report.decay {
        for f in &s.fits {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6e},{:.3e},{},{}",
                s.quantity,
                s.subtracted,
                s.q,
                f.b,
                f.a,
                f.c,
                f.rms,
                f.samples,
                f.b == s.best_b
            );
        }
    }
    Ok(out)
}
