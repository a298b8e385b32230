//! Fixed-fraction marking in space (per direction) and time, and the outer
//! adaptive loop.

use crate::estimator::{effectivity, estimate, IndicatorField};
use crate::mesh::{Mesh, PointLocator, RefinementFlags};
use crate::problem::{layer_width, over_undershoot, DiagnosticReport, Domain, ProblemSpec};
use crate::real::{Point, Real};
use crate::solver::{Discretization, GoalContext, Settings, SolverError};
use crate::time::{SpaceTimeFunction, TimePartition};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptError {
    #[error("fraction {name} = {value} outside [0, 1]")]
    Fraction { name: &'static str, value: f64 },
    #[error("refinement and coarsening fractions of {0} add up to more than one")]
    FractionSum(&'static str),
    #[error("max_loops must be at least one")]
    NoLoops,
}

/// How marked cells are split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefinementMode {
    /// Directional indicators decide each direction separately.
    #[default]
    Anisotropic,
    /// Cells ranked by the isotropic indicator and split in both directions.
    Isotropic,
    /// Every cell and every slab is refined.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingConfig<T> {
    pub theta_space_ref: T,
    pub theta_space_co: T,
    pub theta_time_ref: T,
    pub theta_time_co: T,
    pub max_loops: usize,
    /// Stop once `|η_τ + η_{h,1} + η_{h,2}|` drops below this value.
    pub tolerance: Option<T>,
}

impl<T: Real> Default for MarkingConfig<T> {
    fn default() -> Self {
        Self {
            theta_space_ref: T::of(0.2),
            theta_space_co: T::of(0.01),
            theta_time_ref: T::of(2.0 / 3.0),
            theta_time_co: T::zero(),
            max_loops: 8,
            tolerance: None,
        }
    }
}

impl<T: Real> MarkingConfig<T> {
    pub fn validate(&self) -> Result<(), AdaptError> {
        let check = |name: &'static str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(AdaptError::Fraction {
                    name,
                    value: v.as_f64(),
                })
            }
        };
        check("theta_space_ref", self.theta_space_ref)?;
        check("theta_space_co", self.theta_space_co)?;
        check("theta_time_ref", self.theta_time_ref)?;
        check("theta_time_co", self.theta_time_co)?;
        if self.theta_space_ref + self.theta_space_co > T::one() {
            return Err(AdaptError::FractionSum("space"));
        }
        if self.theta_time_ref + self.theta_time_co > T::one() {
            return Err(AdaptError::FractionSum("time"));
        }
        if self.max_loops == 0 {
            return Err(AdaptError::NoLoops);
        }
        Ok(())
    }
}

/// Indicators summed over slabs per cell and over cells per slab.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulated<T> {
    pub cell_ids: Vec<usize>,
    /// `η_{h,i}^K`.
    pub cell_dir: [Vec<T>; 2],
    /// `η_h^K`.
    pub cell_iso: Vec<T>,
    /// `η_τ^n`.
    pub slab_tau: Vec<T>,
}

pub fn accumulate<T: Real>(field: &IndicatorField<T>) -> Accumulated<T> {
    Accumulated {
        cell_ids: field.cell_ids.clone(),
        cell_dir: [field.cell_dir(0), field.cell_dir(1)],
        cell_iso: field.cell_iso(),
        slab_tau: field.slab_tau(),
    }
}

/// Outcome of marking: cell flags and per-slab time flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Marking {
    pub flags: RefinementFlags,
    pub time_refine: Vec<bool>,
    pub time_coarsen: Vec<bool>,
}

/// `⌈θ n⌉`, guarded against round-up from representation error.
fn refine_count<T: Real>(theta: T, n: usize) -> usize {
    let x = theta.as_f64() * n as f64;
    ((x - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn coarsen_count<T: Real>(theta: T, n: usize) -> usize {
    let x = theta.as_f64() * n as f64;
    ((x + 1e-9).floor().max(0.0) as usize).min(n)
}

/// Positions sorted by decreasing `key`, ties by ascending id.
fn ranked_desc<T: Real>(key: &[T], ids: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| {
        key[b]
            .partial_cmp(&key[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    order
}

/// Positions sorted by increasing `key`, ties by ascending id.
fn ranked_asc<T: Real>(key: &[T], ids: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| {
        key[a]
            .partial_cmp(&key[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    order
}

/// Fixed-fraction marking. `time` disables temporal marking (stationary runs).
pub fn mark<T: Real>(
    acc: &Accumulated<T>,
    cfg: &MarkingConfig<T>,
    mode: RefinementMode,
    time: bool,
) -> Marking {
    let nc = acc.cell_ids.len();
    let ids = &acc.cell_ids;
    let mut flags = RefinementFlags::new();
    let ns = acc.slab_tau.len();
    let mut time_refine = vec![false; ns];
    let mut time_coarsen = vec![false; ns];
    if mode == RefinementMode::Uniform {
        for &c in ids {
            flags.refine_both(c);
        }
        if time {
            time_refine.iter_mut().for_each(|f| *f = true);
        }
        return Marking {
            flags,
            time_refine,
            time_coarsen,
        };
    }
    let nref = refine_count(cfg.theta_space_ref, nc);
    let coarse_key: Vec<T> = match mode {
        RefinementMode::Anisotropic => {
            for i in 0..2 {
                let key: Vec<T> = acc.cell_dir[i].iter().map(|v| v.abs()).collect();
                for &k in ranked_desc(&key, ids).iter().take(nref) {
                    flags.refine(ids[k], i);
                }
            }
            (0..nc)
                .map(|k| acc.cell_dir[0][k].abs() + acc.cell_dir[1][k].abs())
                .collect()
        }
        _ => {
            let key: Vec<T> = acc.cell_iso.iter().map(|v| v.abs()).collect();
            for &k in ranked_desc(&key, ids).iter().take(nref) {
                flags.refine_both(ids[k]);
            }
            key
        }
    };
    let nco = coarsen_count(cfg.theta_space_co, nc);
    let mut taken = 0;
    for &k in &ranked_asc(&coarse_key, ids) {
        if taken == nco {
            break;
        }
        if !flags.cells.contains_key(&ids[k]) {
            flags.coarsen(ids[k]);
            taken += 1;
        }
    }
    if time && ns > 0 {
        let key: Vec<T> = acc.slab_tau.iter().map(|v| v.abs()).collect();
        let slab_ids: Vec<usize> = (0..ns).collect();
        for &n in ranked_desc(&key, &slab_ids)
            .iter()
            .take(refine_count(cfg.theta_time_ref, ns))
        {
            time_refine[n] = true;
        }
        let nco = coarsen_count(cfg.theta_time_co, ns);
        let mut taken = 0;
        for &n in &ranked_asc(&key, &slab_ids) {
            if taken == nco {
                break;
            }
            if !time_refine[n] {
                time_coarsen[n] = true;
                taken += 1;
            }
        }
    }
    Marking {
        flags,
        time_refine,
        time_coarsen,
    }
}

/// New partition: flagged slabs are bisected, adjacent pairs flagged for
/// coarsening are merged.
pub fn adapt_partition<T: Real>(
    partition: &TimePartition<T>,
    refine: &[bool],
    coarsen: &[bool],
) -> TimePartition<T> {
    let pts = partition.points();
    let n = partition.n_slabs();
    let flag = |v: &[bool], k: usize| v.get(k).copied().unwrap_or(false);
    let mut out = vec![pts[0]];
    let mut k = 0;
    while k < n {
        if k + 1 < n && flag(coarsen, k) && flag(coarsen, k + 1) {
            out.push(pts[k + 2]);
            k += 2;
            continue;
        }
        if flag(refine, k) {
            out.push((pts[k] + pts[k + 1]) * T::of(0.5));
        }
        out.push(pts[k + 1]);
        k += 1;
    }
    TimePartition::from_points(out).expect("increasing points")
}

/// Settings of one adaptive run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig<T> {
    pub settings: Settings<T>,
    pub marking: MarkingConfig<T>,
    pub mode: RefinementMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord<T> {
    pub report: DiagnosticReport<T>,
    pub n_cells: usize,
    pub n_slabs: usize,
    /// Slab widths of this loop's partition.
    pub time_steps: Vec<T>,
    pub wall_time: Duration,
}

/// Everything available after the estimate of one loop.
pub struct LoopState<'s, 'a, T: Real> {
    pub record: &'s LoopRecord<T>,
    pub disc: &'s Discretization<'a, T>,
    pub u: &'s SpaceTimeFunction<T>,
    pub z: &'s SpaceTimeFunction<T>,
    pub indicators: &'s IndicatorField<T>,
}

#[derive(Debug, Error)]
#[error("loop {loop_index}: {source}")]
pub struct LoopError<T: Real> {
    pub loop_index: usize,
    pub source: SolverError,
    pub records: Vec<LoopRecord<T>>,
}

/// Value of the primal field `coeffs` at `x`, if `x` lies in the mesh.
pub fn point_value<T: Real>(
    disc: &Discretization<'_, T>,
    locator: &PointLocator<T>,
    coeffs: &[T],
    x: Point<T>,
) -> Option<T> {
    let (cell, xi) = locator.locate(disc.mesh, x)?;
    let leaf = *disc.primal.dofs.leaf_index.get(&cell)?;
    let local = disc.primal.dofs.local_values(leaf, coeffs);
    Some(disc.refs.elem_p.evaluate(&local, xi))
}

/// Diagnostics of one loop except the loop index and the convergence order.
pub fn diagnose<T: Real>(
    disc: &Discretization<'_, T>,
    goal: &GoalContext<T>,
    u: &SpaceTimeFunction<T>,
    field: &IndicatorField<T>,
) -> DiagnosticReport<T> {
    let t = field.totals;
    let error = goal.error(disc, u);
    let (ieff, ieff_a) = error.map_or((None, None), |e| effectivity(&t, e));
    let n_space = disc.primal.n_unconstrained();
    let n_time = if disc.problem.stationary {
        1
    } else {
        disc.n_slabs() * disc.n_modes()
    };
    let last = u.right_value(u.n_slabs() - 1);
    let (overshoot, undershoot) = disc
        .problem
        .range
        .map_or((T::zero(), T::zero()), |r| over_undershoot(&last, r));
    let y_layer = if matches!(disc.problem.domain, Domain::Hemker(_)) {
        let loc = PointLocator::new(disc.mesh);
        layer_width(|y| point_value(disc, &loc, &last, [T::of(4.0), y]))
    } else {
        None
    };
    DiagnosticReport {
        loop_index: 0,
        n_tot: n_space * n_time,
        n_space,
        n_time,
        error,
        eoc: None,
        eta_hx: t.eta_hx,
        eta_hy: t.eta_hy,
        eta_h: t.eta_h,
        eta_he: t.eta_he,
        eta_tau: t.eta_tau,
        eta_tauh: t.eta_tauh(),
        ieff,
        ieff_a,
        ar_max: disc.mesh.aspect_ratio_max(),
        overshoot,
        undershoot,
        y_layer,
        goal_value: goal.value(disc, u).unwrap_or_else(T::zero),
    }
}

/// Solve, estimate, record, mark and refine until `max_loops` or the
/// tolerance is reached. `observe` sees every loop before refinement.
pub fn dwr_loop<T: Real>(
    problem: &ProblemSpec<T>,
    mesh: Mesh<T>,
    partition: TimePartition<T>,
    cfg: &LoopConfig<T>,
    mut observe: impl FnMut(&LoopState<'_, '_, T>),
) -> Result<Vec<LoopRecord<T>>, LoopError<T>> {
    let mut records: Vec<LoopRecord<T>> = Vec::new();
    let mut mesh = mesh;
    let mut partition = partition;
    for l in 0..cfg.marking.max_loops {
        let start = Instant::now();
        let step = (|| -> Result<_, SolverError> {
            let disc = Discretization::new(&mesh, problem, partition.clone(), cfg.settings)?;
            let u = disc.solve_primal()?;
            let goal = GoalContext::new(&disc, &u)?;
            let z = disc.solve_adjoint(&goal, &u)?;
            let field = estimate(&disc, &goal, &u, &z)?;
            let mut report = diagnose(&disc, &goal, &u, &field);
            report.loop_index = l + 1;
            if let (Some(prev), Some(e)) = (records.last().and_then(|r| r.report.error), report.error) {
                if prev != T::zero() && e != T::zero() {
                    report.eoc = Some((prev.abs() / e.abs()).log2());
                }
            }
            let record = LoopRecord {
                report,
                n_cells: disc.leaves.len(),
                n_slabs: disc.n_slabs(),
                time_steps: (0..disc.n_slabs()).map(|n| disc.tau(n)).collect(),
                wall_time: start.elapsed(),
            };
            observe(&LoopState {
                record: &record,
                disc: &disc,
                u: &u,
                z: &z,
                indicators: &field,
            });
            Ok((record, accumulate(&field)))
        })();
        let (record, acc) = match step {
            Ok(v) => v,
            Err(source) => {
                return Err(LoopError {
                    loop_index: l + 1,
                    source,
                    records,
                })
            }
        };
        let r = &record.report;
        let estimate = (r.eta_tau + r.eta_hx + r.eta_hy).abs();
        let done = l + 1 == cfg.marking.max_loops
            || cfg.marking.tolerance.is_some_and(|tol| estimate <= tol);
        records.push(record);
        if done {
            break;
        }
        let marking = mark(&acc, &cfg.marking, cfg.mode, !problem.stationary);
        mesh.refine_in_place(&marking.flags);
        if !problem.stationary {
            partition = adapt_partition(&partition, &marking.time_refine, &marking.time_coarsen);
        }
    }
    Ok(records)
}
