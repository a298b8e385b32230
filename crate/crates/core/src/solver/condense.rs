//! Elimination of hanging-node and Dirichlet DoFs: `u = P ū + g`.

use crate::linalg::CsrMatrix;
use crate::mesh::{BoundaryTag, DofHandler};
use crate::real::{Point, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Condenser<T> {
    /// Column of `P` for unconstrained non-Dirichlet DoFs.
    pub free_index: Vec<Option<usize>>,
    pub n_free: usize,
    pub dirichlet: Vec<Option<BoundaryTag>>,
    /// Rows of `P`.
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> Condenser<T> {
    pub fn new(dofs: &DofHandler<T>) -> Self {
        let n = dofs.n_dofs;
        let dirichlet: Vec<Option<BoundaryTag>> = (0..n)
            .map(|d| {
                dofs.boundary[d]
                    .map(|f| f.tag)
                    .filter(|t| t.is_dirichlet() && dofs.constraint_of[d].is_none())
            })
            .collect();
        let mut free_index = vec![None; n];
        let mut n_free = 0;
        for d in 0..n {
            if dofs.constraint_of[d].is_none() && dirichlet[d].is_none() {
                free_index[d] = Some(n_free);
                n_free += 1;
            }
        }
        let rows = (0..n)
            .map(|d| {
                dofs.expand(d)
                    .into_iter()
                    .filter_map(|(m, w)| free_index[m].map(|c| (c, w)))
                    .collect()
            })
            .collect();
        Self {
            free_index,
            n_free,
            dirichlet,
            rows,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, d: usize) -> &[(usize, T)] {
        &self.rows[d]
    }

    /// `Pᵀ M P`.
    pub fn condense_matrix(&self, m: &CsrMatrix<T>) -> CsrMatrix<T> {
        let mut trip = Vec::with_capacity(m.nnz());
        for i in 0..m.nrows {
            let ri = &self.rows[i];
            if ri.is_empty() {
                continue;
            }
            for (j, v) in m.row(i) {
                for &(cj, wj) in &self.rows[j] {
                    for &(ci, wi) in ri {
                        trip.push((ci, cj, wi * wj * v));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(self.n_free, self.n_free, trip)
    }

    /// `Pᵀ v`.
    pub fn restrict(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_free];
        for (d, r) in self.rows.iter().enumerate() {
            for &(c, w) in r {
                out[c] += w * v[d];
            }
        }
        out
    }

    /// `P x + g`.
    pub fn prolong(&self, x: &[T], lift: Option<&[T]>) -> Vec<T> {
        self.rows
            .iter()
            .enumerate()
            .map(|(d, r)| {
                let base = lift.map_or(T::zero(), |g| g[d]);
                r.iter().fold(base, |s, &(c, w)| s + w * x[c])
            })
            .collect()
    }

    /// Dirichlet lift: boundary values on Dirichlet DoFs, propagated to
    /// constrained DoFs, zero elsewhere.
    pub fn lift(&self, dofs: &DofHandler<T>, g: impl Fn(Point<T>) -> T) -> Vec<T> {
        let mut v = vec![T::zero(); self.n_dofs()];
        for (d, tag) in self.dirichlet.iter().enumerate() {
            if *tag == Some(BoundaryTag::DirichletInhomogeneous) {
                v[d] = g(dofs.positions[d]);
            }
        }
        dofs.distribute(&mut v);
        v
    }
}
