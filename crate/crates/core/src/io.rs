//! Field snapshots on disk: legacy VTK structured points (text) and a raw
//! little-endian binary dump behind a 64-byte header.
//!
//! Binary header: magic `CTNSFLD1`, dims (3 x u32), extents (3 x f64), time
//! (f64), component count (u32), active dimension (u32), 4 reserved bytes.
//! Scalars store interior cell values; vectors store the interior faces of
//! each component in turn.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::FieldError;
use crate::fields::{Grid, ScalarField, VectorField};

pub const MAGIC: &[u8; 8] = b"CTNSFLD1";
pub const HEADER_LEN: usize = 64;

fn header(grid: &Grid, t: f64, ncomp: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..8].copy_from_slice(MAGIC);
    let mut dims = [1u32; 3];
    let mut ext = [1.0f64; 3];
    for a in 0..grid.ndim() {
        dims[a] = grid.dims()[a] as u32;
        ext[a] = grid.extents()[a];
    }
    for a in 0..3 {
        h[8 + 4 * a..12 + 4 * a].copy_from_slice(&dims[a].to_le_bytes());
        h[20 + 8 * a..28 + 8 * a].copy_from_slice(&ext[a].to_le_bytes());
    }
    h[44..52].copy_from_slice(&t.to_le_bytes());
    h[52..56].copy_from_slice(&ncomp.to_le_bytes());
    h[56..60].copy_from_slice(&(grid.ndim() as u32).to_le_bytes());
    h
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(Grid, f64, usize), FieldError> {
    if &h[..8] != MAGIC {
        return Err(FieldError::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(h[o..o + 8].try_into().unwrap());
    let ndim = u32_at(56) as usize;
    if !(2..=3).contains(&ndim) {
        return Err(FieldError::BadDimension(ndim));
    }
    let dims: Vec<usize> = (0..ndim).map(|a| u32_at(8 + 4 * a) as usize).collect();
    let ext: Vec<f64> = (0..ndim).map(|a| f64_at(20 + 8 * a)).collect();
    let grid = Grid::new(&dims, &ext)?;
    Ok((grid, f64_at(44), u32_at(52) as usize))
}

fn write_values(w: &mut impl Write, values: &[f64]) -> Result<(), FieldError> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_values(r: &mut impl Read, count: usize) -> Result<Vec<f64>, FieldError> {
    let mut buf = vec![0u8; 8 * count];
    r.read_exact(&mut buf)
        .map_err(|e| FieldError::Format(format!("truncated data: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_header(r: &mut impl Read) -> Result<(Grid, f64, usize), FieldError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)
        .map_err(|e| FieldError::Format(format!("short header: {e}")))?;
    parse_header(&h)
}

pub fn write_scalar_binary(path: &Path, f: &ScalarField, t: f64) -> Result<(), FieldError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header(f.grid(), t, 1))?;
    write_values(&mut w, &f.interior_vec())?;
    w.flush()?;
    Ok(())
}

pub fn read_scalar_binary(path: &Path) -> Result<(ScalarField, f64), FieldError> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, t, ncomp) = read_header(&mut r)?;
    if ncomp != 1 {
        return Err(FieldError::Format(format!("expected 1 component, found {ncomp}")));
    }
    let v = read_values(&mut r, grid.num_cells())?;
    Ok((ScalarField::from_interior(&grid, &v), t))
}

pub fn write_vector_binary(path: &Path, u: &VectorField, t: f64) -> Result<(), FieldError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header(u.grid(), t, u.ndim() as u32))?;
    for a in 0..u.ndim() {
        write_values(&mut w, &u.interior_vec(a))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_binary(path: &Path) -> Result<(VectorField, f64), FieldError> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, t, ncomp) = read_header(&mut r)?;
    if ncomp != grid.ndim() {
        return Err(FieldError::Format(format!(
            "expected {} components, found {ncomp}",
            grid.ndim()
        )));
    }
    let comps = (0..ncomp)
        .map(|a| {
            let count: usize = (0..grid.ndim())
                .map(|b| grid.dims()[b] - usize::from(a == b))
                .product();
            read_values(&mut r, count)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((VectorField::from_interior(&grid, &comps), t))
}

fn vtk_preamble(w: &mut impl Write, grid: &Grid, title: &str) -> Result<(), FieldError> {
    let mut dims = [1usize; 3];
    let mut h = [1.0; 3];
    dims[..grid.ndim()].copy_from_slice(grid.dims());
    h[..grid.ndim()].copy_from_slice(grid.spacing());
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "ORIGIN {} {} {}", 0.5 * h[0], 0.5 * h[1], if grid.ndim() == 3 { 0.5 * h[2] } else { 0.0 })?;
    writeln!(w, "SPACING {} {} {}", h[0], h[1], h[2])?;
    writeln!(w, "POINT_DATA {}", grid.num_cells())?;
    Ok(())
}

/// Cell values in VTK order (x fastest).
fn vtk_order(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let mut d = [1usize; 3];
    d[..grid.ndim()].copy_from_slice(grid.dims());
    let mut out = Vec::with_capacity(values.len());
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                out.push(values[(i * d[1] + j) * d[2] + k]);
            }
        }
    }
    out
}

/// Cell-centered scalar as VTK point data at the cell centers.
pub fn write_scalar_vtk(path: &Path, f: &ScalarField, name: &str, t: f64) -> Result<(), FieldError> {
    let mut w = BufWriter::new(File::create(path)?);
    vtk_preamble(&mut w, f.grid(), &format!("{name} t={t}"))?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in vtk_order(f.grid(), &f.interior_vec()) {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Velocity averaged to cell centers.
pub fn write_vector_vtk(path: &Path, u: &VectorField, name: &str, t: f64) -> Result<(), FieldError> {
    let grid = *u.grid();
    let mut w = BufWriter::new(File::create(path)?);
    vtk_preamble(&mut w, &grid, &format!("{name} t={t}"))?;
    writeln!(w, "VECTORS {name} double")?;
    let cc: Vec<Vec<f64>> = u
        .cell_centered()
        .iter()
        .map(|f| vtk_order(&grid, &f.interior_vec()))
        .collect();
    for i in 0..grid.num_cells() {
        let z = if grid.ndim() == 3 { cc[2][i] } else { 0.0 };
        writeln!(w, "{:e} {:e} {:e}", cc[0][i], cc[1][i], z)?;
    }
    w.flush()?;
    Ok(())
}
