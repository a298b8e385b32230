//! Space-time assembly and slab marching for the stabilized primal problem and
//! the enriched adjoint problem.

mod cell;
mod condense;
pub mod goal;

pub use cell::{local_forms, supg_delta, CellData, LocalForms, ReferenceData};
pub use condense::Condenser;
pub use goal::{dirac_cell_load, error_norm, GoalContext, GoalTiming};

use crate::elements::{Bilinear, GeometryError};
use crate::linalg::{CsrMatrix, DenseMatrix, LinearSystem, SolveError, SparseLu};
use crate::mesh::{DofHandler, Mesh};
use crate::problem::{ProblemError, ProblemSpec};
use crate::real::{Point, Real};
use crate::time::{SpaceTimeFunction, TimeBasis, TimeError, TimePartition};
use crate::transfer::Operators;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid cell geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error("linear solve failed on slab {slab}: {source}")]
    Slab { slab: usize, source: SolveError },
    #[error("field does not match the discretization: {0}")]
    Mismatch(String),
}

/// Discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings<T> {
    /// Primal spatial degree; the adjoint uses `2p`.
    pub p: usize,
    /// Temporal degree.
    pub r: usize,
    pub delta0: T,
}

impl<T: Real> Default for Settings<T> {
    fn default() -> Self {
        Self {
            p: 1,
            r: 0,
            delta0: T::of(0.1),
        }
    }
}

/// One finite element space on the leaves with its assembled forms.
#[derive(Debug, Clone)]
pub struct Space<T> {
    pub dofs: DofHandler<T>,
    pub cond: Condenser<T>,
    /// Full `B = M + SB`, rows indexing test functions.
    pub b_form: CsrMatrix<T>,
    /// Full `A = εK + C + αM + SA`.
    pub a_form: CsrMatrix<T>,
    pub b_cond: CsrMatrix<T>,
    pub a_cond: CsrMatrix<T>,
}

impl<T: Real> Space<T> {
    fn new(dofs: DofHandler<T>, locals: &[(DenseMatrix<T>, DenseMatrix<T>)]) -> Self {
        let n = dofs.n_dofs;
        let nnz: usize = locals.iter().map(|(b, _)| b.data.len()).sum();
        let mut tb = Vec::with_capacity(nnz);
        let mut ta = Vec::with_capacity(nnz);
        for (k, (bl, al)) in locals.iter().enumerate() {
            let cd = &dofs.cell_dofs[k];
            let m = cd.len();
            for i in 0..m {
                for j in 0..m {
                    tb.push((cd[i], cd[j], bl.data[i * m + j]));
                    ta.push((cd[i], cd[j], al.data[i * m + j]));
                }
            }
        }
        let b_form = CsrMatrix::from_triplets(n, n, tb);
        let a_form = CsrMatrix::from_triplets(n, n, ta);
        let cond = Condenser::new(&dofs);
        let b_cond = cond.condense_matrix(&b_form);
        let a_cond = cond.condense_matrix(&a_form);
        Self {
            dofs,
            cond,
            b_form,
            a_form,
            b_cond,
            a_cond,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs
    }

    /// Number of unconstrained DoFs.
    pub fn n_unconstrained(&self) -> usize {
        self.dofs.n_dofs - self.dofs.constraints.len()
    }
}

/// Everything needed to solve and estimate on one mesh and time partition.
pub struct Discretization<'a, T: Real> {
    pub mesh: &'a Mesh<T>,
    pub problem: &'a ProblemSpec<T>,
    pub settings: Settings<T>,
    pub refs: ReferenceData<T>,
    pub operators: Operators<T>,
    pub time: TimeBasis<T>,
    pub partition: TimePartition<T>,
    pub leaves: Vec<usize>,
    pub geometry: Vec<Bilinear<T>>,
    pub primal: Space<T>,
    pub adjoint: Space<T>,
    /// Per leaf: quadrature points and `jxw (φ + δ b·∇φ)` for primal loads.
    primal_tests: Vec<(Vec<Point<T>>, DenseMatrix<T>)>,
}

/// Degenerate time basis for stationary problems: one slab, no time
/// derivative, no jumps.
pub fn stationary_time_basis<T: Real>() -> TimeBasis<T> {
    let mut tb = TimeBasis::radau(0).expect("r = 0");
    tb.mass = vec![vec![T::one()]];
    tb.deriv = vec![vec![T::zero()]];
    tb.at0 = vec![T::zero()];
    tb.at1 = vec![T::zero()];
    tb.quad_points = vec![T::of(0.5)];
    tb.quad_weights = vec![T::one()];
    tb.values = vec![vec![T::one()]];
    tb.derivs = vec![vec![T::zero()]];
    tb
}

impl<'a, T: Real> Discretization<'a, T> {
    pub fn new(
        mesh: &'a Mesh<T>,
        problem: &'a ProblemSpec<T>,
        partition: TimePartition<T>,
        settings: Settings<T>,
    ) -> Result<Self, SolverError> {
        problem.validate()?;
        let refs = ReferenceData::new(settings.p);
        let time = if problem.stationary {
            stationary_time_basis()
        } else {
            TimeBasis::radau(settings.r)?
        };
        let partition = if problem.stationary {
            TimePartition::uniform(T::one(), 1)?
        } else {
            partition
        };
        let leaves = mesh.leaves();
        let geometry: Vec<Bilinear<T>> = leaves.iter().map(|&c| mesh.geometry(c)).collect();
        let (eps, alpha) = (problem.epsilon, problem.alpha);
        type Local<T> = (
            (DenseMatrix<T>, DenseMatrix<T>),
            (DenseMatrix<T>, DenseMatrix<T>),
            (Vec<Point<T>>, DenseMatrix<T>),
        );
        let locals: Result<Vec<Local<T>>, GeometryError> = geometry
            .par_iter()
            .map(|g| {
                let cell = CellData::new(&refs, g, problem, settings.delta0, true)?;
                let fp = local_forms(&cell, &cell.phys_p, &cell.phys_p, eps, alpha);
                let fq = local_forms(&cell, cell.q_basis(), cell.q_basis(), eps, alpha);
                let tests = (cell.points().to_vec(), cell.combined_test(&cell.phys_p));
                Ok(((fp.b_form(), fp.a_form()), (fq.b_form(), fq.a_form()), tests))
            })
            .collect();
        let locals = locals?;
        let mut lp = Vec::with_capacity(locals.len());
        let mut lq = Vec::with_capacity(locals.len());
        let mut primal_tests = Vec::with_capacity(locals.len());
        for (p, q, t) in locals {
            lp.push(p);
            lq.push(q);
            primal_tests.push(t);
        }
        let primal = Space::new(DofHandler::new(mesh, settings.p), &lp);
        drop(lp);
        let adjoint = Space::new(DofHandler::new(mesh, 2 * settings.p), &lq);
        Ok(Self {
            mesh,
            problem,
            settings,
            refs,
            operators: Operators::new(settings.p),
            time,
            partition,
            leaves,
            geometry,
            primal,
            adjoint,
            primal_tests,
        })
    }

    pub fn n_slabs(&self) -> usize {
        self.partition.n_slabs()
    }

    pub fn n_modes(&self) -> usize {
        self.time.n_modes()
    }

    /// Absolute time of reference point `s` on slab `n`.
    pub fn time_at(&self, n: usize, s: T) -> T {
        if self.problem.stationary {
            return T::zero();
        }
        let (t0, _) = self.partition.slab(n);
        t0 + self.partition.tau(n) * s
    }

    /// Slab width, one for stationary problems.
    pub fn tau(&self, n: usize) -> T {
        if self.problem.stationary {
            T::one()
        } else {
            self.partition.tau(n)
        }
    }

    /// `(v, φ_i) + δ(v, b·∇φ_i)` over the primal space for a function of position.
    pub fn primal_load(&self, v: impl Fn(Point<T>) -> T + Sync) -> Vec<T> {
        let locals: Vec<Vec<T>> = self
            .primal_tests
            .par_iter()
            .map(|(pts, test)| {
                let vals: Vec<T> = pts.iter().map(|&x| v(x)).collect();
                let mut out = vec![T::zero(); test.cols];
                for (q, &fv) in vals.iter().enumerate() {
                    if fv == T::zero() {
                        continue;
                    }
                    for (o, &t) in out.iter_mut().zip(test.row(q)) {
                        *o += fv * t;
                    }
                }
                out
            })
            .collect();
        let mut out = vec![T::zero(); self.primal.n_dofs()];
        for (k, l) in locals.iter().enumerate() {
            for (&g, &v) in self.primal.dofs.cell_dofs[k].iter().zip(l) {
                out[g] += v;
            }
        }
        out
    }

    /// Condensed block matrix of one slab with rows indexing test modes.
    pub fn slab_matrix(&self, space: &Space<T>, tau: T) -> CsrMatrix<T> {
        let m = self.n_modes();
        let nf = space.cond.n_free;
        let tb = &self.time;
        let mut trip = Vec::with_capacity(m * m * (space.b_cond.nnz() + space.a_cond.nnz()));
        for b in 0..m {
            for a in 0..m {
                let cb = tb.deriv[b][a] + tb.at0[a] * tb.at0[b];
                let ca = tau * tb.mass[b][a];
                for (mat, c) in [(&space.b_cond, cb), (&space.a_cond, ca)] {
                    if c == T::zero() {
                        continue;
                    }
                    for r in 0..mat.nrows {
                        for (col, v) in mat.row(r) {
                            trip.push((b * nf + r, a * nf + col, c * v));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(m * nf, m * nf, trip)
    }

    /// Full-space right-hand sides of slab `n` per test mode, before lifting.
    fn slab_sources(&self, n: usize, jump_source: &[T]) -> Vec<Vec<T>> {
        let tb = &self.time;
        let m = self.n_modes();
        let tau = self.tau(n);
        let mut rhs: Vec<Vec<T>> = (0..m)
            .map(|b| jump_source.iter().map(|&v| tb.at0[b] * v).collect())
            .collect();
        for (iq, (&s, &w)) in tb.quad_points.iter().zip(&tb.quad_weights).enumerate() {
            let t = self.time_at(n, s);
            let f = &self.problem.f;
            let load = self.primal_load(|x| f(x, t));
            for b in 0..m {
                let c = tau * w * tb.values[iq][b];
                for (r, &l) in rhs[b].iter_mut().zip(&load) {
                    *r += c * l;
                }
            }
        }
        rhs
    }

    /// Dirichlet lifts at the time nodes of slab `n`.
    fn slab_lifts(&self, n: usize) -> Vec<Vec<T>> {
        self.time
            .basis
            .nodes
            .iter()
            .map(|&s| {
                let t = self.time_at(n, s);
                let g = &self.problem.dirichlet;
                self.primal.cond.lift(&self.primal.dofs, |x| g(x, t))
            })
            .collect()
    }

    /// Condensed right-hand side `Pᵀ(rhs − S g)` stacked over modes.
    fn condensed_rhs(&self, n: usize, sources: &[Vec<T>], lifts: &[Vec<T>]) -> Vec<T> {
        let tb = &self.time;
        let m = self.n_modes();
        let tau = self.tau(n);
        let sp = &self.primal;
        let bg: Vec<Vec<T>> = lifts.iter().map(|g| sp.b_form.mul_vec(g)).collect();
        let ag: Vec<Vec<T>> = lifts.iter().map(|g| sp.a_form.mul_vec(g)).collect();
        let mut out = Vec::with_capacity(m * sp.cond.n_free);
        for b in 0..m {
            let mut r = sources[b].clone();
            for a in 0..m {
                let cb = tb.deriv[b][a] + tb.at0[a] * tb.at0[b];
                let ca = tau * tb.mass[b][a];
                for i in 0..r.len() {
                    r[i] -= cb * bg[a][i] + ca * ag[a][i];
                }
            }
            out.extend(sp.cond.restrict(&r));
        }
        out
    }

    /// Jump source of the first slab: `(u0, φ) + δ(u0, b·∇φ)`.
    pub fn initial_source(&self) -> Vec<T> {
        if self.problem.stationary {
            return vec![T::zero(); self.primal.n_dofs()];
        }
        let u0 = &self.problem.u0;
        self.primal_load(|x| u0(x))
    }

    /// Condensed primal system of slab `n`; `u_prev` is `u(t_n⁻)` (ignored on
    /// the first slab, where the initial datum enters).
    pub fn assemble_primal_slab(&self, n: usize, u_prev: Option<&[T]>) -> LinearSystem<T> {
        let jump = match (n, u_prev) {
            (0, _) | (_, None) => self.initial_source(),
            (_, Some(u)) => self.primal.b_form.mul_vec(u),
        };
        let sources = self.slab_sources(n, &jump);
        let lifts = self.slab_lifts(n);
        LinearSystem {
            matrix: self.slab_matrix(&self.primal, self.tau(n)),
            rhs: self.condensed_rhs(n, &sources, &lifts),
        }
    }

    /// Forward slab marching for the primal solution.
    pub fn solve_primal(&self) -> Result<SpaceTimeFunction<T>, SolverError> {
        let m = self.n_modes();
        let nd = self.primal.n_dofs();
        let nf = self.primal.cond.n_free;
        let mut u = SpaceTimeFunction::zeros(self.time.basis.nodes.clone(), self.n_slabs(), nd);
        if !self.problem.stationary {
            let u0 = &self.problem.u0;
            u.initial = self.primal.dofs.interpolate(|x| u0(x));
        }
        let mut cache: HashMap<u64, SparseLu<T>> = HashMap::new();
        let mut jump = self.initial_source();
        for n in 0..self.n_slabs() {
            let tau = self.tau(n);
            let key = tau.as_f64().to_bits();
            if !cache.contains_key(&key) {
                let lu = SparseLu::new(self.slab_matrix(&self.primal, tau))
                    .map_err(|source| SolverError::Slab { slab: n, source })?;
                cache.insert(key, lu);
            }
            let sources = self.slab_sources(n, &jump);
            let lifts = self.slab_lifts(n);
            let rhs = self.condensed_rhs(n, &sources, &lifts);
            let x = cache[&key]
                .solve(&rhs)
                .map_err(|source| SolverError::Slab { slab: n, source })?;
            for a in 0..m {
                u.slabs[n][a] = self
                    .primal
                    .cond
                    .prolong(&x[a * nf..(a + 1) * nf], Some(&lifts[a]));
            }
            if !self.problem.stationary {
                jump = self.primal.b_form.mul_vec(&u.right_value(n));
            }
        }
        Ok(u)
    }

    /// Full enriched-space adjoint right-hand sides `J′` of slab `n` per trial mode.
    pub fn adjoint_sources(
        &self,
        goal: &GoalContext<T>,
        u: &SpaceTimeFunction<T>,
        n: usize,
    ) -> Result<Vec<Vec<T>>, SolverError> {
        let m = self.n_modes();
        let tb = &self.time;
        let tau = self.tau(n);
        let nq = self.adjoint.n_dofs();
        let last = n + 1 == self.n_slabs();
        let np = self.refs.table_p.n_dofs;
        let locals: Result<Vec<Vec<Vec<T>>>, SolverError> = (0..self.leaves.len())
            .into_par_iter()
            .map(|k| {
                let mut out = vec![vec![T::zero(); self.refs.table_q.n_dofs]; m];
                let mut any = false;
                if goal.timing == GoalTiming::Integrated {
                    let frame = crate::elements::map_frame(&self.geometry[k], &self.refs.quad)?;
                    let dofs = &self.primal.dofs.cell_dofs[k];
                    for (iq, (&s, &w)) in tb.quad_points.iter().zip(&tb.quad_weights).enumerate() {
                        let mut local = vec![T::zero(); np];
                        for (a, coeffs) in u.slabs[n].iter().enumerate() {
                            let la = tb.values[iq][a];
                            for (lv, &g) in local.iter_mut().zip(dofs) {
                                *lv += la * coeffs[g];
                            }
                        }
                        let uh: Vec<T> = (0..frame.points.len())
                            .map(|q| {
                                self.refs.table_p.values[q * np..(q + 1) * np]
                                    .iter()
                                    .zip(&local)
                                    .map(|(&x, &y)| x * y)
                                    .sum()
                            })
                            .collect();
                        let t = self.time_at(n, s);
                        if let Some(load) = goal.integrated_load(self, k, &frame, t, &uh) {
                            any = true;
                            for a in 0..m {
                                let c = tau * w * tb.values[iq][a];
                                for (o, &l) in out[a].iter_mut().zip(&load) {
                                    *o += c * l;
                                }
                            }
                        }
                    }
                }
                if last {
                    if let Some(load) = goal.final_load(k) {
                        any = true;
                        for a in 0..m {
                            for (o, &l) in out[a].iter_mut().zip(&load) {
                                *o += tb.at1[a] * l;
                            }
                        }
                    }
                }
                Ok(if any { out } else { Vec::new() })
            })
            .collect();
        let mut rhs = vec![vec![T::zero(); nq]; m];
        for (k, l) in locals?.iter().enumerate() {
            if l.is_empty() {
                continue;
            }
            for a in 0..m {
                for (&g, &v) in self.adjoint.dofs.cell_dofs[k].iter().zip(&l[a]) {
                    rhs[a][g] += v;
                }
            }
        }
        Ok(rhs)
    }

    /// Backward slab marching for the adjoint solution in the enriched space.
    pub fn solve_adjoint(
        &self,
        goal: &GoalContext<T>,
        u: &SpaceTimeFunction<T>,
    ) -> Result<SpaceTimeFunction<T>, SolverError> {
        if u.n_slabs() != self.n_slabs() || u.n_space() != self.primal.n_dofs() {
            return Err(SolverError::Mismatch("primal solution".into()));
        }
        let m = self.n_modes();
        let nd = self.adjoint.n_dofs();
        let nf = self.adjoint.cond.n_free;
        let tb = &self.time;
        let mut z = SpaceTimeFunction::zeros(tb.basis.nodes.clone(), self.n_slabs(), nd);
        let mut cache: HashMap<u64, SparseLu<T>> = HashMap::new();
        let mut coupling = vec![T::zero(); nd];
        for n in (0..self.n_slabs()).rev() {
            let tau = self.tau(n);
            let key = tau.as_f64().to_bits();
            if !cache.contains_key(&key) {
                let mat = self.slab_matrix(&self.adjoint, tau).transpose();
                let lu = SparseLu::new(mat).map_err(|source| SolverError::Slab { slab: n, source })?;
                cache.insert(key, lu);
            }
            let sources = self.adjoint_sources(goal, u, n)?;
            let mut rhs = Vec::with_capacity(m * nf);
            for a in 0..m {
                let full: Vec<T> = sources[a]
                    .iter()
                    .zip(&coupling)
                    .map(|(&s, &c)| s + tb.at1[a] * c)
                    .collect();
                rhs.extend(self.adjoint.cond.restrict(&full));
            }
            let x = cache[&key]
                .solve(&rhs)
                .map_err(|source| SolverError::Slab { slab: n, source })?;
            for a in 0..m {
                z.slabs[n][a] = self.adjoint.cond.prolong(&x[a * nf..(a + 1) * nf], None);
            }
            let zplus = z.left_value(n);
            coupling = self.adjoint.b_form.mul_vec_transpose(&zplus);
        }
        Ok(z)
    }
}
