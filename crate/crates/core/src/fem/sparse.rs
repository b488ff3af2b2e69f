use std::io::Write;

use crate::error::{Error, Result};
use crate::real::{dot, Real};

/// Symmetric sparse matrix in compressed-row form.
///
/// Both triangles are stored so that row access is cheap; construction verifies
/// that entry `(i, j)` and entry `(j, i)` are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> SparseSymMatrix<T> {
    /// Assembles from `(row, col, value)` triplets, summing duplicates in input order.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable sort keeps the summation order of duplicates deterministic
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));

        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = triplets[t];
            if i >= dim || j >= dim {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i}, {j}) outside a {dim}x{dim} matrix"
                )));
            }
            if last == Some((i, j)) {
                let k = vals.len() - 1;
                vals[k] = vals[k] + v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let m = Self { dim, row_ptr, cols, vals };
        m.check_symmetry()?;
        Ok(m)
    }

    /// Diagonal matrix with the given entries.
    pub fn from_diagonal(diag: &[T]) -> Self {
        let dim = diag.len();
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: diag.to_vec(),
        }
    }

    fn check_symmetry(&self) -> Result<()> {
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i && self.get(j, i) != v {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| j == i || v == T::zero())
        })
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `x^T A x`
    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    /// Row-sum lumped (diagonal) version of this matrix.
    pub fn lumped(&self) -> Self {
        Self::from_diagonal(&self.row_sums())
    }

    /// `alpha * self + beta * other`, merging sparsity patterns.
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        row_ptr.push(0);
        let mut cols = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(cols.capacity());
        for i in 0..self.dim {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut a, mut b) = (0, 0);
            while a < ca.len() || b < cb.len() {
                let ja = ca.get(a).copied().unwrap_or(usize::MAX);
                let jb = cb.get(b).copied().unwrap_or(usize::MAX);
                if ja == jb {
                    cols.push(ja);
                    vals.push(alpha * va[a] + beta * vb[b]);
                    a += 1;
                    b += 1;
                } else if ja < jb {
                    cols.push(ja);
                    vals.push(alpha * va[a]);
                    a += 1;
                } else {
                    cols.push(jb);
                    vals.push(beta * vb[b]);
                    b += 1;
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { dim: self.dim, row_ptr, cols, vals })
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim)
            .flat_map(|i| self.row(i).0.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.dim]; self.dim];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Coordinate text dump, one `i j value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "% {} {} {}", self.dim, self.dim, self.nnz())?;
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }
}
