//! Cell-level tables: reference data, mapped bases and the local forms of the
//! stabilized operator.

use crate::elements::{
    gauss_rule, map_frame, BasisTable, Bilinear, GeometryError, MappedFrame, PhysicalBasis,
    Quadrature, ReferenceElement,
};
use crate::linalg::DenseMatrix;
use crate::problem::ProblemSpec;
use crate::real::{Point, Real};

/// Reference element tables for the primal degree `p` and the enriched degree `2p`.
#[derive(Debug, Clone)]
pub struct ReferenceData<T> {
    pub p: usize,
    pub q: usize,
    /// `2p + 2` Gauss points per direction.
    pub quad: Quadrature<T>,
    pub elem_p: ReferenceElement<T>,
    pub elem_q: ReferenceElement<T>,
    pub table_p: BasisTable<T>,
    pub table_q: BasisTable<T>,
}

impl<T: Real> ReferenceData<T> {
    pub fn new(p: usize) -> Self {
        let q = 2 * p;
        let quad = gauss_rule(q + 2);
        let elem_p = ReferenceElement::isotropic(p);
        let elem_q = ReferenceElement::isotropic(q);
        let table_p = BasisTable::new(&elem_p, &quad.points);
        let table_q = BasisTable::new(&elem_q, &quad.points);
        Self {
            p,
            q,
            quad,
            elem_p,
            elem_q,
            table_p,
            table_q,
        }
    }
}

/// Mapped quadrature data of one cell.
#[derive(Debug, Clone)]
pub struct CellData<T> {
    pub frame: MappedFrame<T>,
    pub delta: T,
    /// Convection at the quadrature points.
    pub b: Vec<[T; 2]>,
    pub phys_p: PhysicalBasis<T>,
    pub phys_q: Option<PhysicalBasis<T>>,
}

/// `δ_K = δ0 · sqrt(|K|)`.
pub fn supg_delta<T: Real>(geom: &Bilinear<T>, delta0: T) -> T {
    delta0 * geom.area().sqrt()
}

impl<T: Real> CellData<T> {
    pub fn new(
        refs: &ReferenceData<T>,
        geom: &Bilinear<T>,
        problem: &ProblemSpec<T>,
        delta0: T,
        with_q: bool,
    ) -> Result<Self, GeometryError> {
        let frame = map_frame(geom, &refs.quad)?;
        let b = frame.points.iter().map(|&x| (problem.b)(x)).collect();
        let phys_p = PhysicalBasis::new(&refs.table_p, &frame);
        let phys_q = with_q.then(|| PhysicalBasis::new(&refs.table_q, &frame));
        Ok(Self {
            frame,
            delta: supg_delta(geom, delta0),
            b,
            phys_p,
            phys_q,
        })
    }

    pub fn n_points(&self) -> usize {
        self.frame.points.len()
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.frame.points
    }

    pub fn q_basis(&self) -> &PhysicalBasis<T> {
        self.phys_q.as_ref().expect("enriched basis requested")
    }

    /// `(v, ψ_k) + δ(v, b·∇ψ_k)` split into its plain and streamline parts,
    /// for values `v` given at the quadrature points.
    pub fn load(&self, test: &PhysicalBasis<T>, v: &[T]) -> (Vec<T>, Vec<T>) {
        let n = test.n_dofs;
        let mut plain = vec![T::zero(); n];
        let mut supg = vec![T::zero(); n];
        for q in 0..self.n_points() {
            let w = self.frame.jxw[q] * v[q];
            if w == T::zero() {
                continue;
            }
            let b = self.b[q];
            let base = q * n;
            for k in 0..n {
                let g = test.grads[base + k];
                plain[k] += w * test.values[base + k];
                supg[k] += w * self.delta * (b[0] * g[0] + b[1] * g[1]);
            }
        }
        (plain, supg)
    }

    /// Combined test matrix `t[q][k] = jxw_q (ψ_k + δ b·∇ψ_k)(x_q)`.
    pub fn combined_test(&self, test: &PhysicalBasis<T>) -> DenseMatrix<T> {
        let n = test.n_dofs;
        DenseMatrix::from_fn(self.n_points(), n, |q, k| {
            let g = test.grads[q * n + k];
            let b = self.b[q];
            self.frame.jxw[q] * (test.values[q * n + k] + self.delta * (b[0] * g[0] + b[1] * g[1]))
        })
    }
}

/// Local matrices with rows indexing the test and columns the trial basis:
/// `mass = (φ_j, ψ_i)`, `a = ε(∇φ_j, ∇ψ_i) + (b·∇φ_j, ψ_i) + α(φ_j, ψ_i)`,
/// `supg_mass = δ(φ_j, b·∇ψ_i)`, `supg_a = δ(−εΔφ_j + b·∇φ_j + αφ_j, b·∇ψ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalForms<T> {
    pub mass: DenseMatrix<T>,
    pub a: DenseMatrix<T>,
    pub supg_mass: DenseMatrix<T>,
    pub supg_a: DenseMatrix<T>,
}

pub fn local_forms<T: Real>(
    cell: &CellData<T>,
    test: &PhysicalBasis<T>,
    trial: &PhysicalBasis<T>,
    epsilon: T,
    alpha: T,
) -> LocalForms<T> {
    let (nt, nr) = (test.n_dofs, trial.n_dofs);
    let mut mass = DenseMatrix::zeros(nt, nr);
    let mut a = DenseMatrix::zeros(nt, nr);
    let mut supg_mass = DenseMatrix::zeros(nt, nr);
    let mut supg_a = DenseMatrix::zeros(nt, nr);
    let mut bg = vec![T::zero(); nr];
    let mut lop = vec![T::zero(); nr];
    for q in 0..cell.n_points() {
        let jxw = cell.frame.jxw[q];
        let b = cell.b[q];
        let tb = q * nt;
        let rb = q * nr;
        for j in 0..nr {
            let g = trial.grads[rb + j];
            bg[j] = b[0] * g[0] + b[1] * g[1];
            lop[j] = -epsilon * trial.laplacians[rb + j] + bg[j] + alpha * trial.values[rb + j];
        }
        for i in 0..nt {
            let vi = test.values[tb + i] * jxw;
            let gi = test.grads[tb + i];
            let gi = [gi[0] * jxw, gi[1] * jxw];
            let sdi = cell.delta * (b[0] * gi[0] + b[1] * gi[1]);
            let row = i * nr;
            for j in 0..nr {
                let vj = trial.values[rb + j];
                let gj = trial.grads[rb + j];
                mass.data[row + j] += vi * vj;
                a.data[row + j] +=
                    epsilon * (gi[0] * gj[0] + gi[1] * gj[1]) + bg[j] * vi + alpha * vi * vj;
                supg_mass.data[row + j] += sdi * vj;
                supg_a.data[row + j] += sdi * lop[j];
            }
        }
    }
    LocalForms {
        mass,
        a,
        supg_mass,
        supg_a,
    }
}

impl<T: Real> LocalForms<T> {
    /// `mass + supg_mass`, the form multiplying time derivatives and jumps.
    pub fn b_form(&self) -> DenseMatrix<T> {
        add(&self.mass, &self.supg_mass)
    }

    /// `a + supg_a`.
    pub fn a_form(&self) -> DenseMatrix<T> {
        add(&self.a, &self.supg_a)
    }
}

fn add<T: Real>(x: &DenseMatrix<T>, y: &DenseMatrix<T>) -> DenseMatrix<T> {
    DenseMatrix {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().zip(&y.data).map(|(&a, &b)| a + b).collect(),
    }
}
