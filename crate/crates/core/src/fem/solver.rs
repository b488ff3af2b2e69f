//! Linear solvers for the systems arising in the forward, adjoint and Newton steps.

use crate::error::{Error, Result};
use crate::fem::sparse::SparseSymMatrix;
use crate::real::{axpy, dot, norm2, Real};

/// Envelope (skyline) Cholesky factorization `A = L L^T`.
///
/// Row `i` of `L` is stored densely from the first structurally nonzero column
/// of row `i` of `A` up to the diagonal. On row-major grid orderings this is a
/// band of width about one grid line, and no fill escapes the envelope.
#[derive(Debug, Clone)]
pub struct ProfileCholesky<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> ProfileCholesky<T> {
    /// Number of stored factor entries the envelope of `a` would need.
    pub fn envelope_size(a: &SparseSymMatrix<T>) -> usize {
        (0..a.dim()).map(|i| i - first_col(a, i) + 1).sum()
    }

    pub fn factor(a: &SparseSymMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let first: Vec<usize> = (0..n).map(|i| first_col(a, i)).collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut data = vec![T::zero(); start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let row_i = &data[start[i] + lo - fi..start[i] + j - fi];
                let row_j = &data[start[j] + lo - fj..start[j] + j - fj];
                s = s - dot(row_i, row_j);
                if j < i {
                    let ljj = data[start[j + 1] - 1];
                    data[start[i] + j - fi] = s / ljj;
                } else {
                    if !(s > T::zero()) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s.to_f64_lossy() });
                    }
                    data[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        let mut z = rhs.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = z[i] - dot(&row[..i - fi], &z[fi..i]);
            z[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let xi = z[i] / row[i - fi];
            z[i] = xi;
            for (zk, &l) in z[fi..i].iter_mut().zip(&row[..i - fi]) {
                *zk = *zk - l * xi;
            }
        }
        z
    }
}

fn first_col<T: Real>(a: &SparseSymMatrix<T>, i: usize) -> usize {
    a.row(i).0.first().copied().unwrap_or(i).min(i)
}

/// Jacobi-preconditioned conjugate gradients on an SPD matrix.
///
/// Stops once `||b - A x||_2 <= tol * ||b||_2`.
pub fn conjugate_gradient<T: Real>(
    a: &SparseSymMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    if bnorm == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > T::zero() {
                Ok(T::one() / d)
            } else {
                Err(Error::NotPositiveDefinite { row: i, pivot: d.to_f64_lossy() })
            }
        })
        .collect::<Result<_>>()?;

    let ax = a.mul_vec(&x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut rnorm = norm2(&r);
    for _ in 0..max_iter {
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::NotPositiveDefinite { row: 0, pivot: pap.to_f64_lossy() });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rnorm = norm2(&r);
        for ((zi, &ri), &di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    if rnorm <= tol * bnorm {
        return Ok(x);
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: (rnorm / bnorm).to_f64_lossy() })
}

/// Settings for [`SpdSolver`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// Required relative residual `||S x - b|| / ||b||`.
    pub tol: T,
    pub max_cg_iter: usize,
    /// Largest envelope (in stored entries) for which the direct factorization is used.
    pub direct_limit: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-12), max_cg_iter: 20_000, direct_limit: 50_000_000 }
    }
}

/// Reusable solver for a fixed SPD matrix.
///
/// Factors once with [`ProfileCholesky`] when the envelope fits the budget and
/// falls back to conjugate gradients otherwise, or when the direct solution
/// misses the residual target after iterative refinement.
#[derive(Debug, Clone)]
pub struct SpdSolver<T> {
    matrix: SparseSymMatrix<T>,
    factor: Option<ProfileCholesky<T>>,
    opts: SolverOptions<T>,
}

impl<T: Real> SpdSolver<T> {
    pub fn new(matrix: SparseSymMatrix<T>, opts: SolverOptions<T>) -> Result<Self> {
        let factor = if ProfileCholesky::envelope_size(&matrix) <= opts.direct_limit {
            Some(ProfileCholesky::factor(&matrix)?)
        } else {
            None
        };
        Ok(Self { matrix, factor, opts })
    }

    pub fn matrix(&self) -> &SparseSymMatrix<T> {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.matrix.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
        }
        let bnorm = norm2(rhs);
        if bnorm == T::zero() {
            return Ok(vec![T::zero(); n]);
        }
        let Some(factor) = &self.factor else {
            return conjugate_gradient(&self.matrix, rhs, None, self.opts.tol, self.opts.max_cg_iter);
        };
        let mut x = factor.solve(rhs);
        for _ in 0..3 {
            let sx = self.matrix.mul_vec(&x);
            let r: Vec<T> = rhs.iter().zip(&sx).map(|(&b, &s)| b - s).collect();
            if norm2(&r) <= self.opts.tol * bnorm {
                return Ok(x);
            }
            let dx = factor.solve(&r);
            axpy(T::one(), &dx, &mut x);
        }
        conjugate_gradient(&self.matrix, rhs, Some(&x), self.opts.tol, self.opts.max_cg_iter)
    }
}

/// One-shot SPD solve with default options.
pub fn solve_spd<T: Real>(s: &SparseSymMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    solve_spd_with(s, rhs, SolverOptions::default())
}

pub fn solve_spd_with<T: Real>(
    s: &SparseSymMatrix<T>,
    rhs: &[T],
    opts: SolverOptions<T>,
) -> Result<Vec<T>> {
    SpdSolver::new(s.clone(), opts)?.solve(rhs)
}

/// Banded LU factorization with partial pivoting for general square systems.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    // upper bandwidth of U after pivoting: ku + kl
    ku_eff: usize,
    width: usize,
    data: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    /// Factors the matrix given as `(row, col, value)` triplets; duplicates are summed.
    pub fn factor_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("triplet ({i}, {j}) outside {n}x{n}")));
            }
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let ku_eff = ku + kl;
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku_eff, width, data: vec![T::zero(); n * width], piv: vec![0; n] };
        for &(i, j, v) in triplets {
            let k = lu.idx(i, j);
            lu.data[k] = lu.data[k] + v;
        }
        lu.factorize()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn factorize(&mut self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.ku_eff).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > T::zero()) {
                return Err(Error::Singular(k));
            }
            self.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let (ij, kj) = (self.idx(i, j), self.idx(k, j));
                    self.data[ij] = self.data[ij] - l * self.data[kj];
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let mut b = rhs.to_vec();
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] = b[i] - self.data[self.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + self.ku_eff).min(n - 1) {
                s = s - self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        b
    }
}
