//! P1 finite elements on Friedrichs-Keller meshes: assembly and the discrete
//! forward/adjoint operators of `-Δy + c y = u` with homogeneous Neumann data.

mod mesh;
mod solver;
mod sparse;

pub use mesh::{Mesh, Rect};
pub use solver::{
    conjugate_gradient, solve_spd, solve_spd_with, BandedLu, ProfileCholesky, SolverOptions,
    SpdSolver,
};
pub use sparse::SparseSymMatrix;

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::real::{norm_inf, Real};

/// Nodal coefficient vector of a continuous piecewise linear function.
///
/// Coefficients coincide with vertex values, so extrema of the function are
/// extrema of the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T>(Vec<T>);

impl<T: Real> GridFunction<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn constant(n: usize, v: T) -> Self {
        Self(vec![v; n])
    }

    /// Nodal interpolant of `f` on `mesh`.
    pub fn interpolate(mesh: &Mesh<T>, f: impl Fn(T, T) -> T) -> Self {
        Self(mesh.vertices().iter().map(|&[x, y]| f(x, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    pub fn max_abs(&self) -> T {
        norm_inf(&self.0)
    }

    pub fn max(&self) -> T {
        self.0.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    /// `sqrt(v^T M v)`, the discrete L2 norm for mass matrix `m`.
    pub fn mass_norm(&self, m: &SparseSymMatrix<T>) -> T {
        m.quad_form(&self.0).max(T::zero()).sqrt()
    }
}

impl<T> Index<usize> for GridFunction<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for GridFunction<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

fn triangle_coords<T: Real>(mesh: &Mesh<T>, tri: &[usize; 3]) -> [[T; 2]; 3] {
    let v = mesh.vertices();
    [v[tri[0]], v[tri[1]], v[tri[2]]]
}

/// Exact P1 element stiffness matrix `∫ ∇φ_a · ∇φ_b` on a triangle.
pub fn element_stiffness<T: Real>(p: [[T; 2]; 3]) -> [[T; 3]; 3] {
    let two = T::lit(2.0);
    let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = area.abs() / two;
    let mut b = [T::zero(); 3];
    let mut c = [T::zero(); 3];
    for a in 0..3 {
        let (j, k) = ((a + 1) % 3, (a + 2) % 3);
        b[a] = p[j][1] - p[k][1];
        c[a] = p[k][0] - p[j][0];
    }
    let scale = T::one() / (T::lit(4.0) * area);
    let mut ke = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = scale * (b[i] * b[j] + c[i] * c[j]);
        }
    }
    ke
}

/// Exact P1 element mass matrix `(T/12) [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass<T: Real>(area: T) -> [[T; 3]; 3] {
    let off = area / T::lit(12.0);
    let diag = off + off;
    [[diag, off, off], [off, diag, off], [off, off, diag]]
}

fn assemble<T: Real>(mesh: &Mesh<T>, local: impl Fn(usize) -> [[T; 3]; 3]) -> Result<SparseSymMatrix<T>> {
    let mut trip = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let ke = local(t);
        for a in 0..3 {
            for b in 0..3 {
                trip.push((tri[a], tri[b], ke[a][b]));
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.num_vertices(), &trip)
}

/// Global stiffness matrix `K_ij = ∫ ∇φ_i · ∇φ_j`.
pub fn assemble_stiffness<T: Real>(mesh: &Mesh<T>) -> Result<SparseSymMatrix<T>> {
    assemble(mesh, |t| element_stiffness(triangle_coords(mesh, &mesh.triangles()[t])))
}

/// Global consistent mass matrix `M_ij = ∫ φ_i φ_j`.
pub fn assemble_mass<T: Real>(mesh: &Mesh<T>) -> Result<SparseSymMatrix<T>> {
    assemble(mesh, |t| element_mass(mesh.signed_area(t)))
}

/// How the mass matrix entering the discrete optimality system is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassKind {
    Consistent,
    /// Row-sum lumping; makes the nodal projection condition the exact
    /// optimality condition of the discrete least-squares problem.
    #[default]
    Lumped,
}

/// The discrete forward operator `A_h = (K + cM)^{-1} M` together with a
/// factorization of `K + cM`, shared by forward and adjoint solves.
#[derive(Debug, Clone)]
pub struct ForwardModel<T> {
    stiffness: SparseSymMatrix<T>,
    mass: SparseSymMatrix<T>,
    c: T,
    solver: SpdSolver<T>,
}

impl<T: Real> ForwardModel<T> {
    pub fn new(stiffness: SparseSymMatrix<T>, mass: SparseSymMatrix<T>, c: T) -> Result<Self> {
        Self::with_options(stiffness, mass, c, SolverOptions::default())
    }

    pub fn with_options(
        stiffness: SparseSymMatrix<T>,
        mass: SparseSymMatrix<T>,
        c: T,
        opts: SolverOptions<T>,
    ) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(Error::InvalidArgument(format!("potential c must be positive, got {c}")));
        }
        let system = stiffness.linear_combination(T::one(), &mass, c)?;
        let solver = SpdSolver::new(system, opts)?;
        Ok(Self { stiffness, mass, c, solver })
    }

    /// Assembles `K` and `M` (consistent or lumped) on `mesh`.
    pub fn from_mesh(mesh: &Mesh<T>, c: T, mass: MassKind) -> Result<Self> {
        let k = assemble_stiffness(mesh)?;
        let m = assemble_mass(mesh)?;
        let m = match mass {
            MassKind::Consistent => m,
            MassKind::Lumped => m.lumped(),
        };
        Self::new(k, m, c)
    }

    pub fn stiffness(&self) -> &SparseSymMatrix<T> {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix<T> {
        &self.mass
    }

    pub fn c(&self) -> T {
        self.c
    }

    /// `K + cM`
    pub fn system(&self) -> &SparseSymMatrix<T> {
        self.solver.matrix()
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn solve_system(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.solver.solve(rhs)
    }

    /// `y = (K + cM)^{-1} M u`
    pub fn forward(&self, u: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check_len(u)?;
        Ok(GridFunction::new(self.solver.solve(&self.mass.mul_vec(u.values()))?))
    }

    /// `p = (K + cM)^{-1} M r` for the residual `r = y - y_delta`.
    pub fn adjoint(&self, residual: &GridFunction<T>) -> Result<GridFunction<T>> {
        // K + cM is symmetric, so the adjoint solve is the forward solve
        self.forward(residual)
    }

    fn check_len(&self, v: &GridFunction<T>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }
}

/// Solves `(K + cM) y = M u`.
pub fn forward_solve<T: Real>(
    k: &SparseSymMatrix<T>,
    m: &SparseSymMatrix<T>,
    c: T,
    u: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    ForwardModel::new(k.clone(), m.clone(), c)?.forward(u)
}

/// Solves `(K + cM) p = M (y - y_delta)`.
pub fn adjoint_solve<T: Real>(
    k: &SparseSymMatrix<T>,
    m: &SparseSymMatrix<T>,
    c: T,
    residual: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    ForwardModel::new(k.clone(), m.clone(), c)?.adjoint(residual)
}
