//! Brute-force reference machinery for small dense instances of
//! `min ||A u - y||_2` over `||u||_inf <= rho`.
//!
//! Nothing here touches the Newton code path: the solver is a fixed-step
//! projected gradient method, and all dense linear algebra (Cholesky, Jacobi
//! eigenvalues) is local to this module.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::ForwardModel;
use crate::real::Real;

/// Largest number of unknowns accepted by [`DenseInstance`].
pub const MAX_DENSE_COLUMNS: usize = 50;

/// Default stagnation tolerance and iteration budget of [`pg_solve`].
pub const PG_TOL: f64 = 1e-10;
pub const PG_MAX_ITER: usize = 1_000_000;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let data = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] = out[j] + self.get(i, j) * x[i];
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_fn(self.rows, other.cols, |i, j| (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `A^T A`
    pub fn gram(&self) -> Self {
        Self::from_fn(self.cols, self.cols, |i, j| (0..self.rows).map(|k| self.get(k, i) * self.get(k, j)).sum())
    }
}

/// Lower Cholesky factor of a dense SPD matrix.
fn cholesky<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows;
    let mut l = DenseMatrix::from_fn(n, n, |_, _| T::zero());
    for i in 0..n {
        for j in 0..=i {
            let s = a.get(i, j) - (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum::<T>();
            if i == j {
                if !(s > T::zero()) {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s.to_f64_lossy() });
                }
                l.data[i * n + i] = s.sqrt();
            } else {
                l.data[i * n + j] = s / l.get(j, j);
            }
        }
    }
    Ok(l)
}

fn cholesky_solve<T: Real>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows;
    let mut z = b.to_vec();
    for i in 0..n {
        z[i] = (z[i] - (0..i).map(|k| l.get(i, k) * z[k]).sum::<T>()) / l.get(i, i);
    }
    for i in (0..n).rev() {
        z[i] = (z[i] - (i + 1..n).map(|k| l.get(k, i) * z[k]).sum::<T>()) / l.get(i, i);
    }
    z
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Vec<T> {
    let n = a.rows;
    let mut m = a.clone();
    let frob: T = m.data.iter().map(|&v| v * v).sum::<T>().sqrt();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum::<T>()
            .sqrt();
        if off <= T::epsilon() * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.data[k * n + p] = c * mkp - s * mkq;
                    m.data[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.data[p * n + k] = c * mpk - s * mqk;
                    m.data[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eig
}

fn clamp<T: Real>(x: T, rho: T) -> T {
    x.max(-rho).min(rho)
}

fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Injective least-squares operator with its spectral data cached for
/// repeated projected-gradient solves.
#[derive(Debug, Clone)]
pub struct DenseOperator<T> {
    a: DenseMatrix<T>,
    gram: DenseMatrix<T>,
    gram_chol: DenseMatrix<T>,
    lambda_max: T,
    sigma_min: T,
}

impl<T: Real> DenseOperator<T> {
    /// Rejects operators without full column rank (smallest singular value <= 1e-8)
    /// and more than [`MAX_DENSE_COLUMNS`] unknowns.
    pub fn new(a: DenseMatrix<T>) -> Result<Self> {
        if a.cols == 0 || a.cols > MAX_DENSE_COLUMNS {
            return Err(Error::InvalidArgument(format!(
                "dense oracle needs 1..={MAX_DENSE_COLUMNS} columns, got {}",
                a.cols
            )));
        }
        if a.rows < a.cols {
            return Err(Error::InvalidArgument("operator with fewer rows than columns is not injective".into()));
        }
        let gram = a.gram();
        let eig = symmetric_eigenvalues(&gram);
        let sigma_min = eig[0].max(T::zero()).sqrt();
        if !(sigma_min > T::lit(1e-8)) {
            return Err(Error::InvalidArgument(format!("operator is not injective (sigma_min = {sigma_min:e})")));
        }
        let gram_chol = cholesky(&gram)?;
        let lambda_max = eig[eig.len() - 1];
        Ok(Self { a, gram, gram_chol, lambda_max, sigma_min })
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.a
    }

    pub fn sigma_min(&self) -> T {
        self.sigma_min
    }

    /// Fixed projected-gradient step `1 / ||A^T A||_2`.
    pub fn step(&self) -> T {
        T::one() / self.lambda_max
    }

    pub fn residual(&self, u: &[T], y: &[T]) -> T {
        let au = self.a.mul_vec(u);
        norm2(&au.iter().zip(y).map(|(&a, &b)| a - b).collect::<Vec<_>>())
    }

    /// Unconstrained least-squares solution `(A^T A)^{-1} A^T y`.
    pub fn least_squares(&self, y: &[T]) -> Vec<T> {
        cholesky_solve(&self.gram_chol, &self.a.tr_mul_vec(y))
    }

    /// Norm of the unconstrained least-squares residual.
    pub fn residual_min(&self, y: &[T]) -> T {
        self.residual(&self.least_squares(y), y)
    }

    /// Projected gradient from the zero start until the fixed-point residual
    /// `||u - proj(u - γ A^T(Au - y))||_inf` drops to `tol`.
    pub fn pg_solve(&self, y: &[T], rho: T, tol: T, max_iter: usize) -> Result<Vec<T>> {
        if y.len() != self.a.rows {
            return Err(Error::DimensionMismatch { expected: self.a.rows, got: y.len() });
        }
        if !(rho >= T::zero()) {
            return Err(Error::InvalidArgument(format!("radius must be nonnegative, got {rho}")));
        }
        if !(tol > T::zero()) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let n = self.a.cols;
        let gamma = self.step();
        let aty = self.a.tr_mul_vec(y);
        let mut u = vec![T::zero(); n];
        let mut next = vec![T::zero(); n];
        for _ in 0..max_iter {
            let gu = self.gram.mul_vec(&u);
            let mut change = T::zero();
            for j in 0..n {
                next[j] = clamp(u[j] - gamma * (gu[j] - aty[j]), rho);
                change = change.max((next[j] - u[j]).abs());
            }
            std::mem::swap(&mut u, &mut next);
            if change <= tol {
                return Ok(u);
            }
        }
        Err(Error::NoConvergence { iterations: max_iter, residual: f64::NAN })
    }

    /// `d(rho, y) = min_{||u||_inf <= rho} ||Au - y||_2`.
    pub fn distance(&self, y: &[T], rho: T) -> Result<T> {
        let u = self.pg_solve(y, rho, T::lit(PG_TOL), PG_MAX_ITER)?;
        Ok(self.residual(&u, y))
    }
}

/// A dense quasi-solution problem: operator, data and radius.
#[derive(Debug, Clone)]
pub struct DenseInstance<T> {
    pub op: DenseOperator<T>,
    pub y: Vec<T>,
    pub rho: T,
}

impl<T: Real> DenseInstance<T> {
    pub fn new(a: DenseMatrix<T>, y: Vec<T>, rho: T) -> Result<Self> {
        if y.len() != a.rows {
            return Err(Error::DimensionMismatch { expected: a.rows, got: y.len() });
        }
        if !(rho >= T::zero()) {
            return Err(Error::InvalidArgument(format!("radius must be nonnegative, got {rho}")));
        }
        Ok(Self { op: DenseOperator::new(a)?, y, rho })
    }

    /// Dense form of the discrete PDE problem: `A = L^T (K + cM)^{-1} M` and data
    /// `L^T y_delta`, where `M = L L^T`, so that the Euclidean misfit equals the
    /// discrete L2 misfit `||y - y_delta||_M`.
    pub fn from_forward_model(model: &ForwardModel<T>, y_delta: &[T], rho: T) -> Result<Self> {
        let n = model.dim();
        let dense = |m: &crate::fem::SparseSymMatrix<T>| DenseMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let s = dense(model.system());
        let m = dense(model.mass());
        let s_chol = cholesky(&s)?;
        let mut s_inv_m = DenseMatrix::from_fn(n, n, |_, _| T::zero());
        for j in 0..n {
            let col: Vec<T> = (0..n).map(|i| m.get(i, j)).collect();
            for (i, v) in cholesky_solve(&s_chol, &col).into_iter().enumerate() {
                s_inv_m.data[i * n + j] = v;
            }
        }
        let lt = cholesky(&m)?.transpose();
        let a = lt.mul(&s_inv_m);
        let y = lt.mul_vec(y_delta);
        Self::new(a, y, rho)
    }

    pub fn pg_solve(&self, tol: T, max_iter: usize) -> Result<Vec<T>> {
        self.op.pg_solve(&self.y, self.rho, tol, max_iter)
    }

    pub fn distance(&self) -> Result<T> {
        self.op.distance(&self.y, self.rho)
    }
}

/// Free-function form of [`DenseInstance::pg_solve`].
pub fn pg_solve<T: Real>(instance: &DenseInstance<T>, tol: T, max_iter: usize) -> Result<Vec<T>> {
    instance.pg_solve(tol, max_iter)
}

/// Sampled distance function `rho -> d(rho, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCurve<T> {
    pub rho_grid: Vec<T>,
    pub d_values: Vec<T>,
}

impl<T: Real> DistanceCurve<T> {
    /// Two-column CSV `rho,d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["rho", "d"])?;
        for (r, d) in self.rho_grid.iter().zip(&self.d_values) {
            wr.write_record([format!("{r:e}"), format!("{d:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn distance_curve<T: Real>(op: &DenseOperator<T>, y: &[T], rho_grid: &[T]) -> Result<DistanceCurve<T>> {
    if rho_grid.is_empty() {
        return Err(Error::InvalidArgument("empty radius grid".into()));
    }
    if rho_grid.windows(2).any(|w| !(w[1] > w[0])) || !(rho_grid[0] >= T::zero()) {
        return Err(Error::InvalidArgument("radius grid must be nonnegative and strictly increasing".into()));
    }
    let d_values = rho_grid.iter().map(|&r| op.distance(y, r)).collect::<Result<_>>()?;
    Ok(DistanceCurve { rho_grid: rho_grid.to_vec(), d_values })
}

/// Whether the quasi-solution lies on the boundary of the admissible ball,
/// `||u_rho||_inf = rho` within 1e-6. Requires `y` outside the attainable set.
pub fn check_boundary_property<T: Real>(instance: &DenseInstance<T>) -> Result<bool> {
    let u = instance.pg_solve(T::lit(PG_TOL), PG_MAX_ITER)?;
    let d = instance.op.residual(&u, &instance.y);
    let floor = instance.op.residual_min(&instance.y) + T::lit(1e-8);
    if !(d > floor) {
        return Err(Error::Precondition(format!(
            "data is attainable at radius {} (d = {d:e}); boundary property does not apply",
            instance.rho
        )));
    }
    let norm = u.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    Ok((norm - instance.rho).abs() <= T::lit(1e-6))
}

/// `|d(rho, y1) - d(rho, y2)| <= ||y1 - y2||_2 + 1e-8`.
pub fn check_nonexpansive<T: Real>(op: &DenseOperator<T>, rho: T, y1: &[T], y2: &[T]) -> Result<bool> {
    let d1 = op.distance(y1, rho)?;
    let d2 = op.distance(y2, rho)?;
    let gap = norm2(&y1.iter().zip(y2).map(|(&a, &b)| a - b).collect::<Vec<_>>());
    Ok((d1 - d2).abs() <= gap + T::lit(1e-8))
}

/// Radius `rho` with `|d(rho, y) - sigma| <= 1e-6`, by bisection on the
/// monotone distance function. `sigma` must lie strictly between the
/// unconstrained residual and `||y||_2`.
pub fn invert_distance<T: Real>(op: &DenseOperator<T>, y: &[T], sigma: T) -> Result<T> {
    let lo_val = op.residual_min(y);
    let hi_val = norm2(y);
    if !(sigma > lo_val && sigma < hi_val) {
        return Err(Error::InvalidArgument(format!(
            "sigma = {sigma:e} outside the attainable range ({lo_val:e}, {hi_val:e})"
        )));
    }
    let target = T::lit(1e-6);
    let ls = op.least_squares(y);
    let (mut lo, mut hi) = (T::zero(), ls.iter().fold(T::zero(), |m, &x| m.max(x.abs())));
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let d = op.distance(y, mid)?;
        if (d - sigma).abs() <= target {
            return Ok(mid);
        }
        if d > sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { iterations: 200, residual: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        let a = DenseMatrix::<f64>::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = symmetric_eigenvalues(&a);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn identity_clamps_separably() {
        let inst = DenseInstance::new(DenseMatrix::identity(3), vec![2.0, -3.0, 1.5], 1.0).unwrap();
        let u = inst.pg_solve(1e-12, 1000).unwrap();
        assert_eq!(u, vec![1.0, -1.0, 1.0]);
        assert!(check_boundary_property(&inst).unwrap());
    }

    #[test]
    fn zero_data_gives_zero() {
        let inst = DenseInstance::new(DenseMatrix::identity(2), vec![0.0, 0.0], 0.7).unwrap();
        assert_eq!(inst.pg_solve(1e-12, 10).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rank_deficiency_and_size_cap() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(DenseOperator::new(a).is_err());
        assert!(DenseOperator::new(DenseMatrix::<f64>::identity(MAX_DENSE_COLUMNS + 1)).is_err());
    }

    #[test]
    fn boundary_precondition_reported() {
        let inst = DenseInstance::new(DenseMatrix::identity(2), vec![0.5, 0.2], 1.0).unwrap();
        assert!(matches!(check_boundary_property(&inst), Err(Error::Precondition(_))));
    }

    #[test]
    fn separable_inversion() {
        let op = DenseOperator::new(DenseMatrix::<f64>::identity(2)).unwrap();
        let rho = invert_distance(&op, &[2.0, 0.0], 1.0).unwrap();
        assert!((rho - 1.0).abs() < 1e-6);
        assert!(invert_distance(&op, &[2.0, 0.0], 2.5).is_err());
        assert!(invert_distance(&op, &[2.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn curve_csv() {
        let op = DenseOperator::new(DenseMatrix::identity(1)).unwrap();
        let c = distance_curve(&op, &[2.0], &[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(c.d_values, vec![2.0, 1.0, 0.0]);
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "rho,d\n0e0,2e0\n1e0,1e0\n3e0,0e0\n");
        assert!(distance_curve(&op, &[2.0], &[1.0, 1.0]).is_err());
    }
}
