//! Batch runs from a configuration and comparison of result tables.

use crate::adapt::{dwr_loop, LoopConfig, LoopError, LoopRecord};
use crate::config::{Benchmark, RunConfig};
use crate::io::{indicators_csv, read_results, results_csv, timesteps_csv, vtk, ErrorCurve, ResultsError};
use crate::real::Real;
use crate::time::TimePartition;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("solver failed in {0}")]
    Solver(String),
}

fn write(path: PathBuf, text: &str) -> Result<(), RunError> {
    fs::write(&path, text).map_err(|source| RunError::Io { path, source })
}

/// Runs the adaptive loop of `cfg`, writing the enabled artifacts to
/// `cfg.output_dir`. On a solver failure the completed loops are still
/// written before the error is returned.
pub fn run<T: Real>(cfg: &RunConfig<T>) -> Result<Vec<LoopRecord<T>>, RunError> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let problem = cfg.problem();
    let mesh = problem.domain.build();
    let partition = if problem.stationary {
        TimePartition::uniform(T::one(), 1)
    } else {
        TimePartition::uniform(problem.t_end, cfg.slabs())
    }
    .expect("validated slab count");
    let loop_cfg = LoopConfig {
        settings: cfg.settings,
        marking: cfg.marking,
        mode: cfg.mode,
    };
    let mut io_error = None;
    let result = dwr_loop(&problem, mesh, partition, &loop_cfg, |state| {
        if io_error.is_some() {
            return;
        }
        let l = state.record.report.loop_index;
        if cfg.output.indicators {
            if let Err(e) = write(dir.join(format!("indicators_{l:02}.csv")), &indicators_csv(state.indicators)) {
                io_error = Some(e);
            }
        }
        if cfg.output.vtk {
            let last = state.u.right_value(state.u.n_slabs() - 1);
            let title = format!("{} loop {l}", problem.name);
            if let Err(e) = write(dir.join(format!("solution_{l:02}.vtk")), &vtk(state.disc, &last, &title)) {
                io_error = Some(e);
            }
        }
    });
    let (records, failure) = match result {
        Ok(r) => (r, None),
        Err(LoopError {
            loop_index,
            source,
            records,
        }) => (records, Some(format!("loop {loop_index}: {source}"))),
    };
    if let Some(e) = io_error {
        return Err(e);
    }
    write_tables(cfg, &dir, &records)?;
    match failure {
        Some(msg) => Err(RunError::Solver(msg)),
        None => Ok(records),
    }
}

fn write_tables<T: Real>(cfg: &RunConfig<T>, dir: &Path, records: &[LoopRecord<T>]) -> Result<(), RunError> {
    let hemker = matches!(cfg.benchmark, Benchmark::HemkerStationary | Benchmark::HemkerQuadratic);
    if cfg.output.csv {
        write(dir.join("results.csv"), &results_csv(records, hemker))?;
    }
    if cfg.output.timesteps && cfg.slabs() > 1 {
        write(dir.join("timesteps.csv"), &timesteps_csv(records))?;
    }
    Ok(())
}

/// `N_tot` needed to reach `target` along a curve, interpolated linearly in
/// log-log coordinates; `None` if the curve never gets there.
pub fn dofs_at_error(curve: &ErrorCurve, target: f64) -> Option<f64> {
    let p = &curve.points;
    let j = p.iter().position(|&(_, e)| e <= target)?;
    if j == 0 {
        return Some(p[0].0);
    }
    let ((n0, e0), (n1, e1)) = (p[j - 1], p[j]);
    if e0 == e1 {
        return Some(n1);
    }
    let s = (target.ln() - e0.ln()) / (e1.ln() - e0.ln());
    Some((n0.ln() + s * (n1.ln() - n0.ln())).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name: String,
    /// Error level both runs reach.
    pub error: f64,
    pub n_base: f64,
    pub n_other: f64,
    /// `n_other / n_base`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub base: String,
    pub comparisons: Vec<Comparison>,
    /// `name,N_tot,error` rows of all runs.
    pub joined: String,
}

impl CompareSummary {
    pub fn report(&self) -> String {
        let mut s = self.joined.clone();
        s.push('\n');
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "{} vs {}: error {:e}, N_tot {:.0} vs {:.0}, ratio {:.4}",
                c.name, self.base, c.error, c.n_other, c.n_base, c.ratio
            );
        }
        s
    }
}

/// Compares every table against the first one at the smallest error level
/// both reach.
pub fn compare_curves(curves: &[ErrorCurve]) -> Result<CompareSummary, ResultsError> {
    let base = &curves[0];
    let mut joined = String::from("name,N_tot,error\n");
    for c in curves {
        for &(n, e) in &c.points {
            let _ = writeln!(joined, "{},{n},{e:e}", c.name);
        }
    }
    let final_error = |c: &ErrorCurve| c.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let comparisons = curves[1..]
        .iter()
        .map(|c| {
            let error = final_error(base).max(final_error(c));
            let n_base = dofs_at_error(base, error).expect("base reaches its own level");
            let n_other = dofs_at_error(c, error).expect("other reaches its own level");
            Comparison {
                name: c.name.clone(),
                error,
                n_base,
                n_other,
                ratio: n_other / n_base,
            }
        })
        .collect();
    Ok(CompareSummary {
        base: base.name.clone(),
        comparisons,
        joined,
    })
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("at least two result files are needed")]
    TooFew,
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Schema(#[from] ResultsError),
}

pub fn compare_runs(paths: &[PathBuf]) -> Result<CompareSummary, CompareError> {
    if paths.len() < 2 {
        return Err(CompareError::TooFew);
    }
    let curves = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|source| CompareError::Io {
                path: p.clone(),
                source,
            })?;
            Ok(read_results(&p.display().to_string(), &text)?)
        })
        .collect::<Result<Vec<_>, CompareError>>()?;
    Ok(compare_curves(&curves)?)
}
