//! Sparse matrices, the direct sparse LU backend and small dense helpers.

use crate::real::Real;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("sparse LU failed: {0}")]
    Factorization(String),
    #[error("linear solve residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error("dimension mismatch: matrix {rows}x{cols}, vector {len}")]
    Dimension { rows: usize, cols: usize, len: usize },
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds the matrix summing duplicate entries in a fixed order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::one())).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r).find(|&(j, _)| j == c).map(|(_, v)| v).unwrap_or(T::zero())
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `Aᵀ x`.
    pub fn mul_vec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![T::zero(); self.ncols];
        for r in 0..self.nrows {
            let xr = x[r];
            for (c, v) in self.row(r) {
                out[c] += v * xr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((r, c, v));
            }
        }
        trip
    }

    /// `Σ_k a_k M_k` for matrices of equal shape.
    pub fn linear_combination(terms: &[(T, &CsrMatrix<T>)]) -> Self {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut trip = Vec::new();
        for &(a, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            for r in 0..m.nrows {
                for (c, v) in m.row(r) {
                    trip.push((r, c, a * v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, trip)
    }

    pub fn frobenius_norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }
}

/// A condensed linear system `A x = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
}

pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Sparse LU factorization with partial pivoting and a residual-checked solve.
pub struct SparseLu<T: Real> {
    matrix: CsrMatrix<T>,
    lu: faer::sparse::linalg::solvers::Lu<usize, T>,
}

impl<T: Real> SparseLu<T> {
    pub fn new(matrix: CsrMatrix<T>) -> Result<Self, SolveError> {
        if matrix.nrows != matrix.ncols {
            return Err(SolveError::Dimension {
                rows: matrix.nrows,
                cols: matrix.ncols,
                len: matrix.nrows,
            });
        }
        let trip: Vec<Triplet<usize, usize, T>> = matrix
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let a = SparseColMat::<usize, T>::try_new_from_triplets(matrix.nrows, matrix.ncols, &trip)
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Self { matrix, lu })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    fn raw_solve(&self, b: &[T]) -> Vec<T> {
        use faer::linalg::solvers::SolveCore;
        let mut m = Mat::<T>::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu
            .solve_in_place_with_conj(faer::Conj::No, m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }

    /// Solves and verifies `‖Ax − b‖ ≤ tol ‖b‖`, with up to two steps of
    /// iterative refinement. The tolerance scales with the working precision.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, SolveError> {
        if b.len() != self.matrix.nrows {
            return Err(SolveError::Dimension {
                rows: self.matrix.nrows,
                cols: self.matrix.ncols,
                len: b.len(),
            });
        }
        let bnorm = norm2(b);
        if bnorm == T::zero() {
            return Ok(vec![T::zero(); b.len()]);
        }
        let tol = residual_tolerance::<T>();
        let mut x = self.raw_solve(b);
        let mut res = T::infinity();
        for _ in 0..3 {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            res = norm2(&r) / bnorm;
            if !res.is_finite() {
                break;
            }
            if res <= tol {
                return Ok(x);
            }
            let dx = self.raw_solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        Err(SolveError::Residual {
            residual: res.as_f64(),
        })
    }
}

fn residual_tolerance<T: Real>() -> T {
    // 1e-10 in double precision; single precision cannot get below ~1e-5.
    T::of(RESIDUAL_TOLERANCE).max(T::eps() * T::of(100.0))
}

/// Direct sparse LU solve with residual check.
pub fn linear_solve<T: Real>(system: &LinearSystem<T>) -> Result<Vec<T>, SolveError> {
    SparseLu::new(system.matrix.clone())?.solve(&system.rhs)
}

pub fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x))
            .collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Solves a square system by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().partial_cmp(&a[j * n + k].abs()).unwrap())
                .unwrap();
            if a[piv * n + k] == T::zero() {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                x.swap(k, piv);
            }
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                if f == T::zero() {
                    continue;
                }
                for j in k..n {
                    let akj = a[k * n + j];
                    a[i * n + j] -= f * akj;
                }
                let xk = x[k];
                x[i] -= f * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= a[k * n + j] * x[j];
            }
            x[k] = s / a[k * n + k];
        }
        Some(x)
    }

    /// Moore–Penrose pseudo-inverse via one-sided Jacobi SVD; singular values
    /// below `rcond · σ_max` are treated as zero (minimum-norm least squares).
    pub fn pseudo_inverse(&self, rcond: T) -> Self {
        let (u, s, v) = self.svd();
        let smax = s.iter().fold(T::zero(), |a, &b| a.max(b));
        let mut out = Self::zeros(self.cols, self.rows);
        for (k, &sk) in s.iter().enumerate() {
            if sk <= rcond * smax || sk == T::zero() {
                continue;
            }
            let inv = T::one() / sk;
            for i in 0..self.cols {
                let vik = v[(i, k)] * inv;
                for j in 0..self.rows {
                    out.data[i * self.rows + j] += vik * u[(j, k)];
                }
            }
        }
        out
    }

    /// Thin SVD `A = U diag(s) Vᵀ` with `k = min(rows, cols)` singular triplets.
    pub fn svd(&self) -> (Self, Vec<T>, Self) {
        if self.rows < self.cols {
            let (u, s, v) = self.transpose().svd();
            return (v, s, u);
        }
        let (m, n) = (self.rows, self.cols);
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let tol = T::eps();
        for _sweep in 0..60 {
            let mut off = T::zero();
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                    for i in 0..m {
                        let ap = a[(i, p)];
                        let aq = a[(i, q)];
                        alpha += ap * ap;
                        beta += aq * aq;
                        gamma += ap * aq;
                    }
                    if gamma == T::zero() {
                        continue;
                    }
                    let c0 = gamma.abs() / (alpha * beta).sqrt();
                    off = off.max(c0);
                    if c0 <= tol {
                        continue;
                    }
                    let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let ap = a[(i, p)];
                        let aq = a[(i, q)];
                        a[(i, p)] = c * ap - s * aq;
                        a[(i, q)] = s * ap + c * aq;
                    }
                    for i in 0..n {
                        let vp = v[(i, p)];
                        let vq = v[(i, q)];
                        v[(i, p)] = c * vp - s * vq;
                        v[(i, q)] = s * vp + c * vq;
                    }
                }
            }
            if off <= tol {
                break;
            }
        }
        let mut s = vec![T::zero(); n];
        let mut u = Self::zeros(m, n);
        for k in 0..n {
            let norm = (0..m).map(|i| a[(i, k)] * a[(i, k)]).sum::<T>().sqrt();
            s[k] = norm;
            if norm > T::zero() {
                for i in 0..m {
                    u[(i, k)] = a[(i, k)] / norm;
                }
            }
        }
        (u, s, v)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve() {
        let sys = LinearSystem {
            matrix: CsrMatrix::<f64>::identity(3),
            rhs: vec![1.0, -2.0, 3.5],
        };
        assert_eq!(linear_solve(&sys).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn two_by_two() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 1.0)]);
        let x = linear_solve(&LinearSystem {
            matrix: m,
            rhs: vec![3.0, 1.0],
        })
        .unwrap();
        assert!((x[0] - 1.0f64).abs() < 1e-15 && (x[1] - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 0, 1.0), (0, 0, 2.5)]);
        assert_eq!(m.get(0, 0), 3.5);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.transpose().get(0, 1), 1.0);
    }

    #[test]
    fn singular_is_reported() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]);
        let r = linear_solve(&LinearSystem {
            matrix: m,
            rhs: vec![1.0, 2.0],
        });
        assert!(r.is_err());
    }

    #[test]
    fn f32_solve() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 4.0f32), (1, 1, 2.0), (0, 1, 1.0)]);
        let x = linear_solve(&LinearSystem {
            matrix: m,
            rhs: vec![5.0, 2.0],
        })
        .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pseudo_inverse_min_norm() {
        // underdetermined: x + y = 2 -> minimum norm (1, 1)
        let a = DenseMatrix::from_fn(1, 2, |_, _| 1.0f64);
        let p = a.pseudo_inverse(1e-12);
        let x = p.mul_vec(&[2.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        // overdetermined least squares
        let a = DenseMatrix::from_fn(3, 1, |_, _| 1.0f64);
        let x = a.pseudo_inverse(1e-12).mul_vec(&[1.0, 2.0, 6.0]);
        assert!((x[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs() {
        let a = DenseMatrix::from_fn(4, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + 0.1 * j as f64);
        let (u, s, v) = a.svd();
        let b = DenseMatrix::from_fn(4, 3, |i, j| (0..3).map(|k| u[(i, k)] * s[k] * v[(j, k)]).sum::<f64>());
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0f64 });
        let x = a.solve(&[6.0, 6.0, 6.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
