use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Axis-aligned rectangle `[ax, bx] x [ay, by]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub ax: T,
    pub bx: T,
    pub ay: T,
    pub by: T,
}

impl<T: Real> Rect<T> {
    pub fn new(ax: T, bx: T, ay: T, by: T) -> Self {
        Self { ax, bx, ay, by }
    }

    /// The reference domain `[-1, 1]^2`.
    pub fn symmetric_unit() -> Self {
        Self::new(-T::one(), T::one(), -T::one(), T::one())
    }

    pub fn area(&self) -> T {
        (self.bx - self.ax) * (self.by - self.ay)
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.ax && x <= self.bx && y >= self.ay && y <= self.by
    }

    pub fn contains_rect(&self, other: &Rect<T>) -> bool {
        other.ax >= self.ax && other.bx <= self.bx && other.ay >= self.ay && other.by <= self.by
    }

    fn is_degenerate(&self) -> bool {
        !(self.bx > self.ax && self.by > self.ay)
            || !(self.ax.is_finite() && self.bx.is_finite() && self.ay.is_finite() && self.by.is_finite())
    }
}

/// Uniform Friedrichs-Keller triangulation of a rectangle.
///
/// Vertices are numbered row-major with `x` running fastest. Each cell is split
/// along its bottom-left to top-right diagonal, and every triangle lists its
/// right-angle vertex first, followed by the other two in counter-clockwise order.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    nx: usize,
    ny: usize,
    rect: Rect<T>,
    vertices: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
}

impl<T: Real> Mesh<T> {
    /// Builds the mesh with `nx * ny` vertices.
    pub fn new(nx: usize, ny: usize, rect: Rect<T>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 vertices per axis, got {nx}x{ny}"
            )));
        }
        if rect.is_degenerate() {
            return Err(Error::InvalidMesh("degenerate rectangle".into()));
        }
        let hx = (rect.bx - rect.ax) / T::from_usize_lossy(nx - 1);
        let hy = (rect.by - rect.ay) / T::from_usize_lossy(ny - 1);

        let mut vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            // pin the last line to the boundary so the tiling is exact
            let y = if j == ny - 1 { rect.by } else { rect.ay + hy * T::from_usize_lossy(j) };
            for i in 0..nx {
                let x = if i == nx - 1 { rect.bx } else { rect.ax + hx * T::from_usize_lossy(i) };
                vertices.push([x, y]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let v00 = j * nx + i;
                let v10 = v00 + 1;
                let v01 = v00 + nx;
                let v11 = v01 + 1;
                triangles.push([v10, v11, v00]);
                triangles.push([v01, v00, v11]);
            }
        }

        Ok(Self { nx, ny, rect, vertices, triangles })
    }

    /// Mesh of `[-1, 1]^2` with `cells` cells per axis.
    pub fn square_cells(cells: usize) -> Result<Self> {
        Self::new(cells + 1, cells + 1, Rect::symmetric_unit())
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn rect(&self) -> &Rect<T> {
        &self.rect
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn hx(&self) -> T {
        (self.rect.bx - self.rect.ax) / T::from_usize_lossy(self.nx - 1)
    }

    pub fn hy(&self) -> T {
        (self.rect.by - self.rect.ay) / T::from_usize_lossy(self.ny - 1)
    }

    /// Signed area of triangle `t` (positive for counter-clockwise orientation).
    pub fn signed_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let half = T::lit(0.5);
        half * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }
}
