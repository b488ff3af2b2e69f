//! Plain-text and binary dumps of meshes and grid functions.
//!
//! Binary layout (all little-endian): `u64 N`, `u64 nx`, `u64 ny`, then `N`
//! `f64` nodal values in vertex order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fem::{GridFunction, Mesh};
use crate::real::Real;

/// Writes `x,y,value` lines (with header), one per vertex.
pub fn write_grid_csv<T: Real, W: Write>(mesh: &Mesh<T>, f: &GridFunction<T>, w: W) -> Result<()> {
    check(mesh, f)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "y", "value"])?;
    for (&[x, y], v) in mesh.vertices().iter().zip(f.values()) {
        wr.write_record([format!("{x:e}"), format!("{y:e}"), format!("{v:e}")])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads the output of [`write_grid_csv`] as `(x, y, value)` rows.
pub fn read_grid_csv<R: Read>(r: R) -> Result<Vec<[f64; 3]>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        let (x, y, v): (f64, f64, f64) = rec?;
        out.push([x, y, v]);
    }
    Ok(out)
}

pub fn write_grid_binary<T: Real, W: Write>(mesh: &Mesh<T>, f: &GridFunction<T>, mut w: W) -> Result<()> {
    check(mesh, f)?;
    for h in [f.len(), mesh.nx(), mesh.ny()] {
        w.write_all(&(h as u64).to_le_bytes())?;
    }
    for v in f.values() {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

/// Returns `(nx, ny, values)`.
pub fn read_grid_binary<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Parse("header overflow".into()))?;
    }
    let [n, nx, ny] = header;
    if nx.checked_mul(ny) != Some(n) {
        return Err(Error::Parse(format!("header N = {n} does not match {nx} x {ny}")));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut word)?;
        values.push(f64::from_le_bytes(word));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after grid data", rest.len())));
    }
    Ok((nx, ny, values))
}

fn check<T: Real>(mesh: &Mesh<T>, f: &GridFunction<T>) -> Result<()> {
    if f.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: f.len() });
    }
    Ok(())
}
