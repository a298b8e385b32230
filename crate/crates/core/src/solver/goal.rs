//! Goal functionals on discrete fields: values, errors and the enriched-space
//! loads of their derivatives.

use super::{Discretization, SolverError};
use crate::elements::{gauss_legendre_1d, gauss_rule, map_frame, BasisTable, Bilinear, MappedFrame};
use crate::problem::{GoalKind, ProblemError, RegularizedDirac};
use crate::real::{Point, Real};
use crate::time::SpaceTimeFunction;
use crate::elements::ReferenceElement;
use rayon::prelude::*;

/// Whether the goal integrates over the time interval or looks at `u(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalTiming {
    Integrated,
    FinalTime,
}

/// Goal functional frozen for one loop: the L2(L2) normalization and the
/// spatial densities are fixed here.
#[derive(Debug, Clone)]
pub struct GoalContext<T> {
    pub kind: GoalKind<T>,
    pub scale: T,
    pub timing: GoalTiming,
    /// `‖e‖_Q` of the current solution (L2(L2) goal), one otherwise.
    pub norm: T,
    /// Enriched-space loads `∫ w ψ_k` of the spatial density per leaf.
    pub cell_loads: Vec<Option<Vec<T>>>,
}

impl<T: Real> GoalContext<T> {
    pub fn new(disc: &Discretization<'_, T>, u: &SpaceTimeFunction<T>) -> Result<Self, SolverError> {
        let problem = disc.problem;
        let kind = problem.goal.kind;
        let timing = if problem.stationary || matches!(kind, GoalKind::L2L2) {
            GoalTiming::Integrated
        } else {
            GoalTiming::FinalTime
        };
        let (norm, cell_loads) = match kind {
            GoalKind::L2L2 => {
                if problem.exact.is_none() {
                    return Err(ProblemError::UnsupportedGoal.into());
                }
                (error_norm(disc, u)?, vec![None; disc.leaves.len()])
            }
            GoalKind::Mean => (T::one(), mean_loads(disc)?),
            GoalKind::Point(d) => {
                let mut loads: Vec<Option<Vec<T>>> = disc
                    .geometry
                    .par_iter()
                    .map(|g| dirac_cell_load(g, &d, &disc.refs.elem_q))
                    .collect();
                // unit mass over the part of the support inside the domain
                let mass: T = loads.iter().flatten().map(|l| l.iter().copied().sum::<T>()).sum();
                if !(mass > T::zero()) {
                    return Err(ProblemError::Cutoff(d.cutoff.as_f64()).into());
                }
                for l in loads.iter_mut().flatten() {
                    for v in l.iter_mut() {
                        *v /= mass;
                    }
                }
                (T::one(), loads)
            }
        };
        Ok(Self {
            kind,
            scale: problem.goal.scale,
            timing,
            norm,
            cell_loads,
        })
    }

    /// Enriched-space load of the time-integrated goal density on leaf `k`
    /// at one time quadrature point; `u_h` holds the discrete solution and
    /// `t` the time at the cell quadrature points.
    pub fn integrated_load(
        &self,
        disc: &Discretization<'_, T>,
        k: usize,
        frame: &MappedFrame<T>,
        t: T,
        u_h: &[T],
    ) -> Option<Vec<T>> {
        if self.timing != GoalTiming::Integrated {
            return None;
        }
        match self.kind {
            GoalKind::L2L2 => {
                if self.norm == T::zero() {
                    return None;
                }
                let exact = disc.problem.exact.as_ref()?;
                let tab = &disc.refs.table_q;
                let n = tab.n_dofs;
                let mut out = vec![T::zero(); n];
                let c = self.scale / self.norm;
                for (q, &x) in frame.points.iter().enumerate() {
                    let e = (exact.value)(x, t) - u_h[q];
                    let w = frame.jxw[q] * e * c;
                    for (o, &v) in out.iter_mut().zip(&tab.values[q * n..(q + 1) * n]) {
                        *o += w * v;
                    }
                }
                Some(out)
            }
            _ => self.cell_loads[k]
                .as_ref()
                .map(|l| l.iter().map(|&v| v * self.scale).collect()),
        }
    }

    /// Enriched-space load of a final-time goal on leaf `k`.
    pub fn final_load(&self, k: usize) -> Option<Vec<T>> {
        if self.timing != GoalTiming::FinalTime {
            return None;
        }
        self.cell_loads[k]
            .as_ref()
            .map(|l| l.iter().map(|&v| v * self.scale).collect())
    }

    /// `J(u_h)` for mean and point goals.
    pub fn value(&self, disc: &Discretization<'_, T>, u: &SpaceTimeFunction<T>) -> Option<T> {
        if matches!(self.kind, GoalKind::L2L2) {
            return None;
        }
        let embed = &disc.operators.embed;
        let field: Vec<T> = match self.timing {
            GoalTiming::FinalTime => u.right_value(u.n_slabs() - 1),
            GoalTiming::Integrated => {
                // stationary: the single slab is constant in time
                u.eval(0, T::one())
            }
        };
        let mut total = T::zero();
        for (k, load) in self.cell_loads.iter().enumerate() {
            let Some(load) = load else { continue };
            let local = disc.primal.dofs.local_values(k, &field);
            let up = embed.mul_vec(&local);
            total += load.iter().zip(&up).map(|(&a, &b)| a * b).sum::<T>();
        }
        Some(total * self.scale)
    }

    /// `J(u) − J(u_h)` when it is known.
    pub fn error(&self, disc: &Discretization<'_, T>, u: &SpaceTimeFunction<T>) -> Option<T> {
        match self.kind {
            GoalKind::L2L2 => Some(self.norm * self.scale),
            _ => {
                let r = disc.problem.goal.reference?;
                Some(r * self.scale - self.value(disc, u)?)
            }
        }
    }
}

fn mean_loads<T: Real>(disc: &Discretization<'_, T>) -> Result<Vec<Option<Vec<T>>>, SolverError> {
    let tab = &disc.refs.table_q;
    let n = tab.n_dofs;
    disc.geometry
        .par_iter()
        .map(|g| {
            let frame = map_frame(g, &disc.refs.quad)?;
            let mut out = vec![T::zero(); n];
            for q in 0..frame.jxw.len() {
                for (o, &v) in out.iter_mut().zip(&tab.values[q * n..(q + 1) * n]) {
                    *o += frame.jxw[q] * v;
                }
            }
            Ok(Some(out))
        })
        .collect()
}

/// `∫_K δ ψ_k` by a composite Gauss rule fine enough to resolve the cutoff
/// radius; `None` when the cell misses the support.
pub fn dirac_cell_load<T: Real>(
    geom: &Bilinear<T>,
    dirac: &RegularizedDirac<T>,
    elem: &ReferenceElement<T>,
) -> Option<Vec<T>> {
    let [lo, hi] = dirac.support();
    let mut bmin = [T::infinity(); 2];
    let mut bmax = [T::neg_infinity(); 2];
    for v in &geom.v {
        for i in 0..2 {
            bmin[i] = bmin[i].min(v[i]);
            bmax[i] = bmax[i].max(v[i]);
        }
    }
    if bmax[0] <= lo[0] || bmin[0] >= hi[0] || bmax[1] <= lo[1] || bmin[1] >= hi[1] {
        return None;
    }
    let diam = (bmax[0] - bmin[0]).max(bmax[1] - bmin[1]);
    let m = (T::of(8.0) * diam / dirac.cutoff)
        .ceil()
        .to_usize()
        .unwrap_or(64)
        .clamp(2, 64);
    let (g, w) = gauss_legendre_1d::<T>(4);
    let h = T::one() / T::of_usize(m);
    let mut out = vec![T::zero(); elem.n_dofs()];
    let mut hit = false;
    for sj in 0..m {
        for si in 0..m {
            for (gj, wj) in g.iter().zip(&w) {
                for (gi, wi) in g.iter().zip(&w) {
                    let xi: Point<T> = [(T::of_usize(si) + *gi) * h, (T::of_usize(sj) + *gj) * h];
                    let d = dirac.eval(geom.map(xi));
                    if d == T::zero() {
                        continue;
                    }
                    hit = true;
                    let wt = *wi * *wj * h * h * geom.det(xi) * d;
                    for (o, v) in out.iter_mut().zip(elem.values(xi)) {
                        *o += wt * v;
                    }
                }
            }
        }
    }
    hit.then_some(out)
}

/// `‖u − u_h‖_{L2(L2)}` (or the spatial L2 norm for stationary problems) with a
/// quadrature finer than the assembly rule.
pub fn error_norm<T: Real>(
    disc: &Discretization<'_, T>,
    u: &SpaceTimeFunction<T>,
) -> Result<T, SolverError> {
    let exact = disc
        .problem
        .exact
        .as_ref()
        .ok_or(ProblemError::UnsupportedGoal)?;
    let p = disc.settings.p;
    let quad = gauss_rule::<T>(2 * p + 3);
    let tab = BasisTable::new(&disc.refs.elem_p, &quad.points);
    let nd = tab.n_dofs;
    let stationary = disc.problem.stationary;
    let (ts, tw) = if stationary {
        (vec![T::zero()], vec![T::one()])
    } else {
        gauss_legendre_1d::<T>(disc.settings.r + 3)
    };
    let time_basis = crate::elements::Lagrange1d::new(u.time_nodes.clone());
    let tvals: Vec<Vec<T>> = ts.iter().map(|&s| time_basis.values(s)).collect();
    let partition = &disc.partition;
    let per_cell: Result<Vec<T>, SolverError> = (0..disc.leaves.len())
        .into_par_iter()
        .map(|k| {
            let frame = map_frame(&disc.geometry[k], &quad)?;
            let dofs = &disc.primal.dofs.cell_dofs[k];
            let mut sum = T::zero();
            let mut local = vec![T::zero(); nd];
            for n in 0..u.n_slabs() {
                let (t0, _) = partition.slab(n);
                let tau = if stationary { T::one() } else { partition.tau(n) };
                let mut slab_sum = T::zero();
                for (iq, (&s, &w)) in ts.iter().zip(&tw).enumerate() {
                    local.iter_mut().for_each(|v| *v = T::zero());
                    for (a, coeffs) in u.slabs[n].iter().enumerate() {
                        let la = tvals[iq][a];
                        for (lv, &g) in local.iter_mut().zip(dofs) {
                            *lv += la * coeffs[g];
                        }
                    }
                    let t = if stationary { T::zero() } else { t0 + tau * s };
                    let mut cell_sum = T::zero();
                    for (q, &x) in frame.points.iter().enumerate() {
                        let uh: T = tab.values[q * nd..(q + 1) * nd]
                            .iter()
                            .zip(&local)
                            .map(|(&a, &b)| a * b)
                            .sum();
                        let e = (exact.value)(x, t) - uh;
                        cell_sum += frame.jxw[q] * e * e;
                    }
                    slab_sum += w * cell_sum;
                }
                sum += tau * slab_sum;
            }
            Ok(sum)
        })
        .collect();
    Ok(per_cell?.into_iter().sum::<T>().sqrt())
}
