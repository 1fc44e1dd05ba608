//! Small dense linear algebra: row-major matrices, products, spectral norm by
//! power iteration, Cholesky and tridiagonal solves.

use std::ops::{Index, IndexMut};

use crate::error::{Result, WaveletError};
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T x`
    pub fn matvec_t(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (yj, &a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Spectral norm via power iteration on `M^T M` from the all-ones vector.
    pub fn norm2(&self) -> T {
        self.norm2_with(T::lit(1e-10), 10_000)
    }

    pub fn norm2_with(&self, rel_tol: T, max_iter: usize) -> T {
        if self.cols == 0 || self.rows == 0 {
            return T::zero();
        }
        let mut v = vec![T::one(); self.cols];
        let mut sigma_sq = T::zero();
        for _ in 0..max_iter {
            let nv = dot(&v, &v).sqrt();
            if nv == T::zero() {
                return T::zero();
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.matvec_t(&self.matvec(&v));
            let next = dot(&v, &w);
            v = w;
            if (next - sigma_sq).abs() <= rel_tol * next.abs() {
                sigma_sq = next;
                break;
            }
            sigma_sq = next;
        }
        sigma_sq.sqrt()
    }

    /// Lower-triangular Cholesky factor `L` with `self = L L^T`.
    pub fn cholesky(&self) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= T::zero() {
                return Err(WaveletError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Inverse of a lower-triangular matrix by forward substitution.
    pub fn lower_triangular_inverse(&self) -> Self {
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for c in 0..n {
            for i in c..n {
                let mut s = if i == c { T::one() } else { T::zero() };
                for k in c..i {
                    s -= self[(i, k)] * inv[(k, c)];
                }
                inv[(i, c)] = s / self[(i, i)];
            }
        }
        inv
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `A X = B` for a tridiagonal `A` given by its sub-, main and
/// super-diagonals (Thomas algorithm, no pivoting; `A` must be diagonally
/// dominant).
pub fn solve_tridiagonal<T: Real>(sub: &[T], diag: &[T], sup: &[T], rhs: &DenseMatrix<T>) -> DenseMatrix<T> {
    let n = diag.len();
    assert_eq!(rhs.nrows(), n);
    assert!(sub.len() + 1 == n && sup.len() + 1 == n);
    let mut c = vec![T::zero(); n];
    let mut x = rhs.clone();
    let m = rhs.ncols();
    let mut beta = diag[0];
    for col in 0..m {
        x[(0, col)] /= beta;
    }
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i - 1] * c[i - 1];
        for col in 0..m {
            let prev = x[(i - 1, col)];
            x[(i, col)] = (x[(i, col)] - sub[i - 1] * prev) / beta;
        }
    }
    for i in (0..n - 1).rev() {
        for col in 0..m {
            let next = x[(i + 1, col)];
            x[(i, col)] -= c[i] * next;
        }
    }
    x
}
