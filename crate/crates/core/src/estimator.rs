//! Dual weighted residual indicators: temporal, isotropic spatial, the two
//! directional parts and the remainder, localized to (cell, slab).
//!
//! Every residual is first reduced on a cell to moment vectors in the enriched
//! basis (one per time quadrature point plus jump terms); the weights are then
//! plain dot products against those moments.

use crate::elements::Lagrange1d;
use crate::real::Real;
use crate::solver::{local_forms, CellData, Discretization, GoalContext, SolverError};
use crate::time::{reconstruct_in_time, SpaceTimeFunction, TimeBasis};
use crate::transfer::{Operators, Recovery};
use rayon::prelude::*;

/// Global estimator values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorTotals<T> {
    pub eta_tau: T,
    pub eta_hx: T,
    pub eta_hy: T,
    pub eta_h: T,
    pub eta_he: T,
}

impl<T: Real> EstimatorTotals<T> {
    pub fn eta_tauh(&self) -> T {
        self.eta_tau + self.eta_h
    }

    /// `η_{h,1} + η_{h,2} + η_{h,E}`, equal to `η_h` up to rounding.
    pub fn split_sum(&self) -> T {
        self.eta_hx + self.eta_hy + self.eta_he
    }
}

/// Indicators per (slab n, leaf k), stored at `n * n_cells + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField<T> {
    pub n_slabs: usize,
    /// Mesh cell id of every leaf.
    pub cell_ids: Vec<usize>,
    pub eta_tau: Vec<T>,
    pub eta_iso: Vec<T>,
    pub eta_dir: [Vec<T>; 2],
    pub eta_rem: Vec<T>,
    pub totals: EstimatorTotals<T>,
}

impl<T: Real> IndicatorField<T> {
    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn index(&self, n: usize, k: usize) -> usize {
        n * self.n_cells() + k
    }

    /// η_τ per slab, summed over cells.
    pub fn slab_tau(&self) -> Vec<T> {
        self.eta_tau
            .chunks(self.n_cells().max(1))
            .map(|c| c.iter().copied().sum())
            .collect()
    }

    /// η_{h,i} per leaf, summed over slabs.
    pub fn cell_dir(&self, i: usize) -> Vec<T> {
        let nc = self.n_cells();
        let mut out = vec![T::zero(); nc];
        for chunk in self.eta_dir[i].chunks(nc.max(1)) {
            for (o, &v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }

    /// η_h per leaf, summed over slabs.
    pub fn cell_iso(&self) -> Vec<T> {
        let nc = self.n_cells();
        let mut out = vec![T::zero(); nc];
        for chunk in self.eta_iso.chunks(nc.max(1)) {
            for (o, &v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }
}

/// Relative residuals of the discrete primal and adjoint equations, as seen
/// by the estimator's own moment evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orthogonality<T> {
    pub primal: T,
    pub adjoint: T,
}

/// Spatial adjoint weights of one enriched local vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointWeights<T> {
    /// `R_h z`.
    pub rz: Vec<T>,
    /// `z` with its degree reduced to p in direction `i` only, so that
    /// `z − riz[i]` is the part of the interpolation error along `i`.
    pub riz: [Vec<T>; 2],
    /// `Ê z = z + R_h z − R_1 z − R_2 z`.
    pub ez: Vec<T>,
}

pub fn adjoint_weights<T: Real>(ops: &Operators<T>, z: &[T]) -> AdjointWeights<T> {
    let rz = ops.r_iso.mul_vec(z);
    let riz = [ops.r_dir[1].mul_vec(z), ops.r_dir[0].mul_vec(z)];
    let ez = (0..z.len())
        .map(|i| z[i] + rz[i] - riz[0][i] - riz[1][i])
        .collect();
    AdjointWeights { rz, riz, ez }
}

/// Spatial primal weights from a recovered enriched field `iu` and the
/// embedded primal field `ue`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalWeights<T> {
    /// `I u − u`.
    pub iso: Vec<T>,
    /// `R_i I u − u` with `R_i` keeping degree 2p along `i`.
    pub dir: [Vec<T>; 2],
    /// `(I u − u) − Σ_i (R_i I u − u)`, which is `Ê I u` whenever the
    /// recovery interpolates `u` at its own nodes.
    pub rem: Vec<T>,
}

pub fn primal_weights<T: Real>(ops: &Operators<T>, iu: &[T], ue: &[T]) -> PrimalWeights<T> {
    let iso: Vec<T> = iu.iter().zip(ue).map(|(&a, &b)| a - b).collect();
    let dir = [0, 1].map(|i| {
        let r = ops.r_dir[i].mul_vec(iu);
        r.iter().zip(ue).map(|(&a, &b)| a - b).collect::<Vec<T>>()
    });
    let rem = (0..iso.len())
        .map(|j| iso[j] - dir[0][j] - dir[1][j])
        .collect();
    PrimalWeights { iso, dir, rem }
}

/// Time evaluation tables of a nodal basis at the slab quadrature points.
struct TimeTable<T> {
    values: Vec<Vec<T>>,
    derivs: Vec<Vec<T>>,
    at0: Vec<T>,
    at1: Vec<T>,
}

impl<T: Real> TimeTable<T> {
    fn from_basis(tb: &TimeBasis<T>) -> Self {
        Self {
            values: tb.values.clone(),
            derivs: tb.derivs.clone(),
            at0: tb.at0.clone(),
            at1: tb.at1.clone(),
        }
    }

    fn from_nodes(nodes: &[T], points: &[T]) -> Self {
        let basis = Lagrange1d::new(nodes.to_vec());
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        for &s in points {
            let (v, d, _) = basis.eval_all(s);
            values.push(v);
            derivs.push(d);
        }
        Self {
            values,
            derivs,
            at0: basis.values(T::zero()),
            at1: basis.values(T::one()),
        }
    }

    /// Samples of a field given by its modes on one slab.
    fn sample(&self, modes: &[Vec<T>], tau: T) -> Samples<T> {
        let n = modes.first().map_or(0, |v| v.len());
        let comb = |w: &[T], scale: T| -> Vec<T> {
            let mut out = vec![T::zero(); n];
            for (c, m) in w.iter().zip(modes) {
                let c = *c * scale;
                if c == T::zero() {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(m) {
                    *o += c * v;
                }
            }
            out
        };
        let inv = T::one() / tau;
        Samples {
            vals: self.values.iter().map(|w| comb(w, T::one())).collect(),
            dots: self.derivs.iter().map(|w| comb(w, inv)).collect(),
            plus: comb(&self.at0, T::one()),
            end: comb(&self.at1, T::one()),
        }
    }
}

/// A field on one slab at the time quadrature points, its time derivative
/// there, and its two one-sided end values.
#[derive(Debug, Clone)]
struct Samples<T> {
    vals: Vec<Vec<T>>,
    dots: Vec<Vec<T>>,
    plus: Vec<T>,
    end: Vec<T>,
}

impl<T: Real> Samples<T> {
    fn map(&self, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        Self {
            vals: self.vals.iter().map(|v| f(v)).collect(),
            dots: self.dots.iter().map(|v| f(v)).collect(),
            plus: f(&self.plus),
            end: f(&self.end),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        let d = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x - y).collect::<Vec<T>>();
        Self {
            vals: self.vals.iter().zip(&o.vals).map(|(a, b)| d(a, b)).collect(),
            dots: self.dots.iter().zip(&o.dots).map(|(a, b)| d(a, b)).collect(),
            plus: d(&self.plus, &o.plus),
            end: d(&self.end, &o.end),
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<T: Real>(y: &mut [T], c: T, x: &[T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += c * v;
    }
}

/// Primal residual moments of one (cell, slab): `ρ(w) = Σ_q g[q]·w(s_q) + jump·w⁺`.
struct PrimalMoments<T> {
    g: Vec<Vec<T>>,
    jump: Vec<T>,
}

impl<T: Real> PrimalMoments<T> {
    fn apply(&self, vals: &[Vec<T>], plus: &[T]) -> T {
        self.g.iter().zip(vals).map(|(g, v)| dot(g, v)).sum::<T>() + dot(&self.jump, plus)
    }

    /// Moments collapsed onto the modes of `table`.
    fn collapse(&self, table: &TimeTable<T>) -> Vec<Vec<T>> {
        (0..table.at0.len())
            .map(|a| {
                let mut out = self.jump.iter().map(|&v| table.at0[a] * v).collect::<Vec<T>>();
                for (q, g) in self.g.iter().enumerate() {
                    axpy(&mut out, table.values[q][a], g);
                }
                out
            })
            .collect()
    }
}

/// Adjoint residual moments for a fixed adjoint argument:
/// `ρ*(φ) = Σ_q v[q]·φ(s_q) + d[q]·∂tφ(s_q) + plus·φ⁺ + prev·φ⁻_{n−1} + end·φ⁻_n`.
struct AdjointMoments<T> {
    v: Vec<Vec<T>>,
    d: Vec<Vec<T>>,
    plus: Vec<T>,
    prev: Vec<T>,
    end: Vec<T>,
}

impl<T: Real> AdjointMoments<T> {
    fn apply(&self, phi: &Samples<T>, prev: &[T]) -> T {
        let mut s = dot(&self.plus, &phi.plus) + dot(&self.prev, prev) + dot(&self.end, &phi.end);
        for q in 0..self.v.len() {
            s += dot(&self.v[q], &phi.vals[q]) + dot(&self.d[q], &phi.dots[q]);
        }
        s
    }
}

struct CellOut<T> {
    /// Per slab: η_τ, η_h, η_{h,1}, η_{h,2}, η_{h,E}.
    eta: Vec<[T; 5]>,
    ortho: Option<CellOrtho<T>>,
}

/// Local contributions to the discrete residuals, with absolute magnitudes
/// as the scale for the relative check.
struct CellOrtho<T> {
    primal: Vec<Vec<Vec<T>>>,
    primal_abs: Vec<Vec<Vec<T>>>,
    adjoint: Vec<Vec<Vec<T>>>,
    adjoint_abs: Vec<Vec<Vec<T>>>,
}

struct Estimator<'d, 'a, T: Real> {
    disc: &'d Discretization<'a, T>,
    goal: &'d GoalContext<T>,
    u: &'d SpaceTimeFunction<T>,
    z: &'d SpaceTimeFunction<T>,
    recovery: Recovery<T>,
    dg: TimeTable<T>,
    /// Reconstructions in time and their evaluation table (non-stationary only).
    recon: Option<(SpaceTimeFunction<T>, SpaceTimeFunction<T>, TimeTable<T>)>,
}

fn check_fields<T: Real>(
    disc: &Discretization<'_, T>,
    u: &SpaceTimeFunction<T>,
    z: &SpaceTimeFunction<T>,
) -> Result<(), SolverError> {
    let m = disc.n_modes();
    if u.n_slabs() != disc.n_slabs() || u.n_space() != disc.primal.n_dofs() || u.time_nodes.len() != m
    {
        return Err(SolverError::Mismatch("primal solution".into()));
    }
    if z.n_slabs() != disc.n_slabs() || z.n_space() != disc.adjoint.n_dofs() || z.time_nodes.len() != m
    {
        return Err(SolverError::Mismatch("adjoint solution".into()));
    }
    Ok(())
}

impl<'d, 'a, T: Real> Estimator<'d, 'a, T> {
    fn new(
        disc: &'d Discretization<'a, T>,
        goal: &'d GoalContext<T>,
        u: &'d SpaceTimeFunction<T>,
        z: &'d SpaceTimeFunction<T>,
    ) -> Result<Self, SolverError> {
        check_fields(disc, u, z)?;
        let recovery = Recovery::build(disc.mesh, &disc.primal.dofs);
        let dg = TimeTable::from_basis(&disc.time);
        let recon = if disc.problem.stationary {
            None
        } else {
            let anchor = if u.initial.is_empty() {
                let u0 = &disc.problem.u0;
                disc.primal.dofs.interpolate(|x| u0(x))
            } else {
                u.initial.clone()
            };
            let taus: Vec<T> = (0..disc.n_slabs()).map(|n| disc.tau(n)).collect();
            let eu = reconstruct_in_time(u, &taus, Some(&anchor));
            let ez = reconstruct_in_time(z, &taus, None);
            let table = TimeTable::from_nodes(&eu.time_nodes, &disc.time.quad_points);
            Some((eu, ez, table))
        };
        Ok(Self {
            disc,
            goal,
            u,
            z,
            recovery,
            dg,
            recon,
        })
    }

    fn cell(&self, k: usize, ortho: bool) -> Result<CellOut<T>, SolverError> {
        let d = self.disc;
        let pr = d.problem;
        let stationary = pr.stationary;
        let cell = CellData::new(&d.refs, &d.geometry[k], pr, d.settings.delta0, true)?;
        let pq = cell.q_basis();
        let pp = &cell.phys_p;
        let fqp = local_forms(&cell, pq, pp, pr.epsilon, pr.alpha);
        let fqq = local_forms(&cell, pq, pq, pr.epsilon, pr.alpha);
        let mt = fqq.mass.transpose();
        let at = fqq.a.transpose();
        let sbt = fqq.supg_mass.transpose();
        let sat = fqq.supg_a.transpose();
        let ops = &d.operators;
        let embed_t = ops.embed.transpose();
        let rec = &self.recovery.cells[k];
        let dp = &d.primal.dofs;
        let dq = &d.adjoint.dofs;
        let tb = &d.time;
        let m = d.n_modes();
        let nq = pq.n_dofs;
        let np = pp.n_dofs;
        let n_slabs = d.n_slabs();
        let nqt = tb.quad_points.len();
        let npts = cell.n_points();
        let zeros = vec![T::zero(); nq];

        let (u0_plain, u0_supg) = if stationary {
            (zeros.clone(), zeros.clone())
        } else {
            let vals: Vec<T> = cell.points().iter().map(|&x| (pr.u0)(x)).collect();
            cell.load(pq, &vals)
        };

        let mut out = CellOut {
            eta: Vec::with_capacity(n_slabs),
            ortho: ortho.then(|| CellOrtho {
                primal: vec![vec![vec![T::zero(); np]; m]; n_slabs],
                primal_abs: vec![vec![vec![T::zero(); np]; m]; n_slabs],
                adjoint: vec![vec![vec![T::zero(); nq]; m]; n_slabs],
                adjoint_abs: vec![vec![vec![T::zero(); nq]; m]; n_slabs],
            }),
        };
        let mut u_prev = vec![T::zero(); np];
        let mut iu_prev = zeros.clone();
        let mut eu_prev = vec![T::zero(); np];
        let half = T::of(0.5);

        for n in 0..n_slabs {
            let tau = d.tau(n);
            let last = n + 1 == n_slabs;
            let ua: Vec<Vec<T>> = (0..m).map(|a| dp.local_values(k, &self.u.slabs[n][a])).collect();
            let za: Vec<Vec<T>> = (0..m).map(|a| dq.local_values(k, &self.z.slabs[n][a])).collect();
            let us = self.dg.sample(&ua, tau);

            // primal residual ρ and stabilization S
            let mut rho = PrimalMoments {
                g: Vec::with_capacity(nqt),
                jump: zeros.clone(),
            };
            let mut stab = PrimalMoments {
                g: Vec::with_capacity(nqt),
                jump: zeros.clone(),
            };
            let mut jdens: Vec<Option<Vec<T>>> = Vec::with_capacity(nqt);
            for q in 0..nqt {
                let t = d.time_at(n, tb.quad_points[q]);
                let c = tau * tb.quad_weights[q];
                let fv: Vec<T> = cell.points().iter().map(|&x| (pr.f)(x, t)).collect();
                let (fl, sfl) = cell.load(pq, &fv);
                let mu = fqp.mass.mul_vec(&us.dots[q]);
                let au = fqp.a.mul_vec(&us.vals[q]);
                let smu = fqp.supg_mass.mul_vec(&us.dots[q]);
                let sau = fqp.supg_a.mul_vec(&us.vals[q]);
                rho.g.push((0..nq).map(|i| c * (fl[i] - mu[i] - au[i])).collect());
                stab.g.push((0..nq).map(|i| c * (smu[i] + sau[i] - sfl[i])).collect());
                let uh: Vec<T> = (0..npts).map(|p| pp.field(p, &us.vals[q]).0).collect();
                jdens.push(
                    self.goal
                        .integrated_load(d, k, &cell.frame, t, &uh)
                        .map(|l| l.into_iter().map(|v| c * v).collect()),
                );
            }
            if !stationary {
                if n == 0 {
                    let mu = fqp.mass.mul_vec(&us.plus);
                    let su = fqp.supg_mass.mul_vec(&us.plus);
                    rho.jump = (0..nq).map(|i| u0_plain[i] - mu[i]).collect();
                    stab.jump = (0..nq).map(|i| su[i] - u0_supg[i]).collect();
                } else {
                    let du: Vec<T> = us.plus.iter().zip(&u_prev).map(|(&a, &b)| a - b).collect();
                    let mu = fqp.mass.mul_vec(&du);
                    let su = fqp.supg_mass.mul_vec(&du);
                    rho.jump = mu.iter().map(|&v| -v).collect();
                    stab.jump = su;
                }
            }
            let final_load = if last { self.goal.final_load(k) } else { None };

            // ρ* and S′ for an adjoint argument given by its modes
            let adjoint_moments = |ya: &[Vec<T>]| -> (AdjointMoments<T>, AdjointMoments<T>) {
                let ys = self.dg.sample(ya, tau);
                let mut h = AdjointMoments {
                    v: Vec::with_capacity(nqt),
                    d: Vec::with_capacity(nqt),
                    plus: zeros.clone(),
                    prev: zeros.clone(),
                    end: final_load.clone().unwrap_or_else(|| zeros.clone()),
                };
                let mut s = AdjointMoments {
                    v: Vec::with_capacity(nqt),
                    d: Vec::with_capacity(nqt),
                    plus: zeros.clone(),
                    prev: zeros.clone(),
                    end: zeros.clone(),
                };
                for q in 0..nqt {
                    let c = tau * tb.quad_weights[q];
                    let ay = at.mul_vec(&ys.vals[q]);
                    let my = mt.mul_vec(&ys.vals[q]);
                    let mut v: Vec<T> = ay.iter().map(|&x| -c * x).collect();
                    if let Some(j) = &jdens[q] {
                        axpy(&mut v, T::one(), j);
                    }
                    h.v.push(v);
                    s.v.push(sat.mul_vec(&ys.vals[q]).into_iter().map(|x| c * x).collect());
                    if stationary {
                        h.d.push(zeros.clone());
                        s.d.push(zeros.clone());
                    } else {
                        h.d.push(my.iter().map(|&x| -c * x).collect());
                        s.d.push(sbt.mul_vec(&ys.vals[q]).into_iter().map(|x| c * x).collect());
                    }
                }
                if !stationary {
                    let my = mt.mul_vec(&ys.plus);
                    let sy = sbt.mul_vec(&ys.plus);
                    h.plus = my.iter().map(|&x| -x).collect();
                    s.plus = sy.clone();
                    if n > 0 {
                        h.prev = my;
                        s.prev = sy.into_iter().map(|x| -x).collect();
                    }
                }
                (h, s)
            };

            let zw: Vec<AdjointWeights<T>> = za.iter().map(|z| adjoint_weights(ops, z)).collect();
            let rza: Vec<Vec<T>> = zw.iter().map(|w| w.rz.clone()).collect();
            let (h_r, s_r) = adjoint_moments(&rza);

            // adjoint-weight parts
            let gm = rho.collapse(&self.dg);
            let gsm = stab.collapse(&self.dg);
            let mut e_iso = T::zero();
            let mut e_dir = [T::zero(); 2];
            let mut e_rem = T::zero();
            for a in 0..m {
                let (z, w) = (&za[a], &zw[a]);
                for j in 0..nq {
                    e_iso += gm[a][j] * (z[j] - w.rz[j]) + gsm[a][j] * (z[j] + w.rz[j]);
                    for i in 0..2 {
                        e_dir[i] += gm[a][j] * (z[j] - w.riz[i][j]) + gsm[a][j] * w.riz[i][j];
                    }
                    e_rem += -gm[a][j] * w.ez[j] + gsm[a][j] * w.ez[j];
                }
            }

            // primal-weight parts
            let iua: Vec<Vec<T>> = (0..m).map(|a| rec.apply(&self.u.slabs[n][a])).collect();
            let uea: Vec<Vec<T>> = ua.iter().map(|v| ops.embed.mul_vec(v)).collect();
            let pw: Vec<PrimalWeights<T>> =
                (0..m).map(|a| primal_weights(ops, &iua[a], &uea[a])).collect();
            let ue_prev = ops.embed.mul_vec(&u_prev);
            let pw_prev = primal_weights(ops, &iu_prev, &ue_prev);
            let star = |sel: &dyn Fn(&PrimalWeights<T>) -> &Vec<T>| -> T {
                let modes: Vec<Vec<T>> = pw.iter().map(|w| sel(w).clone()).collect();
                let phi = self.dg.sample(&modes, tau);
                let prev = sel(&pw_prev);
                h_r.apply(&phi, prev) + s_r.apply(&phi, prev)
            };
            e_iso += star(&|w| &w.iso);
            e_dir[0] += star(&|w| &w.dir[0]);
            e_dir[1] += star(&|w| &w.dir[1]);
            e_rem += star(&|w| &w.rem);

            // temporal part
            let mut e_tau = T::zero();
            if let Some((eu, ez, table)) = &self.recon {
                let zs = self.dg.sample(&za, tau);
                let eza: Vec<Vec<T>> = ez.slabs[n].iter().map(|v| dq.local_values(k, v)).collect();
                let w = table.sample(&eza, tau).sub(&zs);
                e_tau += rho.apply(&w.vals, &w.plus);
                let eua: Vec<Vec<T>> = eu.slabs[n].iter().map(|v| dp.local_values(k, v)).collect();
                let eus = table.sample(&eua, tau);
                let phi = eus.sub(&us).map(|v| ops.embed.mul_vec(v));
                let prev: Vec<T> = if n > 0 {
                    let diff: Vec<T> = eu_prev.iter().zip(&u_prev).map(|(&a, &b)| a - b).collect();
                    ops.embed.mul_vec(&diff)
                } else {
                    zeros.clone()
                };
                eu_prev = eus.end.clone();
                let (h_z, _) = adjoint_moments(&za);
                e_tau += h_z.apply(&phi, &prev);
            }
            out.eta.push([
                half * e_tau,
                half * e_iso,
                half * e_dir[0],
                half * e_dir[1],
                half * e_rem,
            ]);

            if let Some(o) = out.ortho.as_mut() {
                for b in 0..m {
                    let r: Vec<T> = (0..nq).map(|j| gm[b][j] - gsm[b][j]).collect();
                    let ab: Vec<T> = (0..nq).map(|j| gm[b][j].abs() + gsm[b][j].abs()).collect();
                    o.primal[n][b] = embed_t.mul_vec(&r);
                    o.primal_abs[n][b] = embed_t.mul_vec(&ab);
                }
                let (h_z, s_z) = adjoint_moments(&za);
                for a in 0..m {
                    let mut r = vec![T::zero(); nq];
                    let mut ab = vec![T::zero(); nq];
                    let mut add = |c: T, x: &[T], y: &[T]| {
                        if c == T::zero() {
                            return;
                        }
                        for j in 0..nq {
                            r[j] += c * (x[j] - y[j]);
                            ab[j] += (c * x[j]).abs() + (c * y[j]).abs();
                        }
                    };
                    for q in 0..nqt {
                        add(self.dg.values[q][a], &h_z.v[q], &s_z.v[q]);
                        add(self.dg.derivs[q][a] / tau, &h_z.d[q], &s_z.d[q]);
                    }
                    add(self.dg.at0[a], &h_z.plus, &s_z.plus);
                    add(self.dg.at1[a], &h_z.end, &zeros);
                    axpy(&mut o.adjoint[n][a], T::one(), &r);
                    axpy(&mut o.adjoint_abs[n][a], T::one(), &ab);
                    if n > 0 {
                        let c = self.dg.at1[a];
                        for j in 0..nq {
                            o.adjoint[n - 1][a][j] += c * (h_z.prev[j] - s_z.prev[j]);
                            o.adjoint_abs[n - 1][a][j] += (c * h_z.prev[j]).abs() + (c * s_z.prev[j]).abs();
                        }
                    }
                }
            }

            u_prev = us.end.clone();
            let mut iu_end = zeros.clone();
            for a in 0..m {
                axpy(&mut iu_end, self.dg.at1[a], &iua[a]);
            }
            iu_prev = iu_end;
        }
        Ok(out)
    }

    fn run(&self, ortho: bool) -> Result<Vec<CellOut<T>>, SolverError> {
        (0..self.disc.leaves.len())
            .into_par_iter()
            .map(|k| self.cell(k, ortho))
            .collect()
    }
}

/// Evaluates all indicators for the primal solution `u` and the enriched
/// adjoint solution `z` of the same discretization.
pub fn estimate<T: Real>(
    disc: &Discretization<'_, T>,
    goal: &GoalContext<T>,
    u: &SpaceTimeFunction<T>,
    z: &SpaceTimeFunction<T>,
) -> Result<IndicatorField<T>, SolverError> {
    let est = Estimator::new(disc, goal, u, z)?;
    let cells = est.run(false)?;
    let nc = cells.len();
    let ns = disc.n_slabs();
    let mut field = IndicatorField {
        n_slabs: ns,
        cell_ids: disc.leaves.clone(),
        eta_tau: vec![T::zero(); ns * nc],
        eta_iso: vec![T::zero(); ns * nc],
        eta_dir: [vec![T::zero(); ns * nc], vec![T::zero(); ns * nc]],
        eta_rem: vec![T::zero(); ns * nc],
        totals: EstimatorTotals::default(),
    };
    for (k, c) in cells.iter().enumerate() {
        for (n, e) in c.eta.iter().enumerate() {
            let i = n * nc + k;
            field.eta_tau[i] = e[0];
            field.eta_iso[i] = e[1];
            field.eta_dir[0][i] = e[2];
            field.eta_dir[1][i] = e[3];
            field.eta_rem[i] = e[4];
        }
    }
    let sum = |v: &[T]| v.iter().copied().sum::<T>();
    field.totals = EstimatorTotals {
        eta_tau: sum(&field.eta_tau),
        eta_hx: sum(&field.eta_dir[0]),
        eta_hy: sum(&field.eta_dir[1]),
        eta_h: sum(&field.eta_iso),
        eta_he: sum(&field.eta_rem),
    };
    Ok(field)
}

/// Residuals of the discrete primal and adjoint equations evaluated through
/// the estimator's moments, relative to the size of the cell contributions.
/// Both vanish up to rounding when the moments agree with the assembled
/// systems.
pub fn galerkin_orthogonality<T: Real>(
    disc: &Discretization<'_, T>,
    goal: &GoalContext<T>,
    u: &SpaceTimeFunction<T>,
    z: &SpaceTimeFunction<T>,
) -> Result<Orthogonality<T>, SolverError> {
    let est = Estimator::new(disc, goal, u, z)?;
    let cells = est.run(true)?;
    let ns = disc.n_slabs();
    let m = disc.n_modes();
    let relative = |space: &crate::solver::Space<T>, pick: &dyn Fn(&CellOrtho<T>) -> (&Vec<Vec<Vec<T>>>, &Vec<Vec<Vec<T>>>)| {
        let nd = space.n_dofs();
        let mut worst = T::zero();
        let mut scale = T::zero();
        for n in 0..ns {
            for a in 0..m {
                let mut r = vec![T::zero(); nd];
                let mut s = vec![T::zero(); nd];
                for (k, c) in cells.iter().enumerate() {
                    let (res, ab) = pick(c.ortho.as_ref().expect("requested"));
                    for (j, &g) in space.dofs.cell_dofs[k].iter().enumerate() {
                        r[g] += res[n][a][j];
                        s[g] += ab[n][a][j];
                    }
                }
                for v in space.cond.restrict(&r) {
                    worst = worst.max(v.abs());
                }
                for v in space.cond.restrict(&s) {
                    scale = scale.max(v.abs());
                }
            }
        }
        if scale > T::zero() {
            worst / scale
        } else {
            worst
        }
    };
    Ok(Orthogonality {
        primal: relative(&disc.primal, &|c| (&c.primal, &c.primal_abs)),
        adjoint: relative(&disc.adjoint, &|c| (&c.adjoint, &c.adjoint_abs)),
    })
}

/// `(I_eff, I_eff^a)` from the estimator totals and the true goal error;
/// absent when the error vanishes.
pub fn effectivity<T: Real>(totals: &EstimatorTotals<T>, error: T) -> (Option<T>, Option<T>) {
    if error == T::zero() || !error.is_finite() {
        return (None, None);
    }
    let iso = ((totals.eta_h + totals.eta_tau) / error).abs();
    let aniso = ((totals.eta_hx + totals.eta_hy + totals.eta_tau) / error).abs();
    (Some(iso), Some(aniso))
}
