//! CSV and legacy VTK writers, and the results-file reader used for
//! comparisons.

use crate::adapt::LoopRecord;
use crate::estimator::IndicatorField;
use crate::real::Real;
use crate::solver::Discretization;
use std::fmt::Write as _;
use thiserror::Error;

pub const RESULTS_HEADER: [&str; 13] = [
    "loop", "N_tot", "N_space", "N_time", "error", "EOC", "eta_hx", "eta_hy", "eta_h", "eta_tau",
    "eta_tauh", "Ieff_a", "ar_max",
];

fn opt<T: Real>(v: Option<T>) -> String {
    v.map(|x| format!("{:e}", x.as_f64())).unwrap_or_default()
}

fn num<T: Real>(v: T) -> String {
    format!("{:e}", v.as_f64())
}

/// Results table, one row per loop; `y_layer` adds the Hemker layer width.
pub fn results_csv<T: Real>(records: &[LoopRecord<T>], y_layer: bool) -> String {
    let mut s = RESULTS_HEADER.join(",");
    if y_layer {
        s += ",y_layer";
    }
    s.push('\n');
    for r in records {
        let d = &r.report;
        let mut row = [
            d.loop_index.to_string(),
            d.n_tot.to_string(),
            d.n_space.to_string(),
            d.n_time.to_string(),
            opt(d.error),
            opt(d.eoc),
            num(d.eta_hx),
            num(d.eta_hy),
            num(d.eta_h),
            num(d.eta_tau),
            num(d.eta_tau + d.eta_h),
            opt(d.ieff_a),
            num(d.ar_max),
        ]
        .join(",");
        if y_layer {
            row.push(',');
            row += &opt(d.y_layer);
        }
        s += &row;
        s.push('\n');
    }
    s
}

/// Per slab and cell indicators of one loop.
pub fn indicators_csv<T: Real>(field: &IndicatorField<T>) -> String {
    let mut s = String::from("slab,cell_id,eta_tau,eta_hx,eta_hy\n");
    for n in 0..field.n_slabs {
        for (k, &c) in field.cell_ids.iter().enumerate() {
            let i = field.index(n, k);
            let _ = writeln!(
                s,
                "{n},{c},{},{},{}",
                num(field.eta_tau[i]),
                num(field.eta_dir[0][i]),
                num(field.eta_dir[1][i])
            );
        }
    }
    s
}

/// Slab intervals of every loop.
pub fn timesteps_csv<T: Real>(records: &[LoopRecord<T>]) -> String {
    let mut s = String::from("loop,slab,t_start,tau\n");
    for r in records {
        let mut t = T::zero();
        for (n, &tau) in r.time_steps.iter().enumerate() {
            let _ = writeln!(s, "{},{n},{},{}", r.report.loop_index, num(t), num(tau));
            t += tau;
        }
    }
    s
}

/// Legacy ASCII VTK of the leaves with the primal field `coeffs` at the
/// corners (cells do not share points, so hanging nodes need no care) and
/// the refinement levels and aspect ratio as cell data.
pub fn vtk<T: Real>(disc: &Discretization<'_, T>, coeffs: &[T], title: &str) -> String {
    let mesh = disc.mesh;
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]].map(|p| [T::of(p[0]), T::of(p[1])]);
    let nc = disc.leaves.len();
    let mut s = format!("# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {} double\n", 4 * nc);
    let mut values = Vec::with_capacity(4 * nc);
    for (leaf, &c) in disc.leaves.iter().enumerate() {
        let g = &disc.geometry[leaf];
        let local = disc.primal.dofs.local_values(leaf, coeffs);
        for &xi in &corners {
            let x = g.map(xi);
            let _ = writeln!(s, "{} {} 0", x[0].as_f64(), x[1].as_f64());
            values.push(disc.refs.elem_p.evaluate(&local, xi));
        }
        debug_assert_eq!(mesh.cells[c].id, c);
    }
    let _ = writeln!(s, "CELLS {nc} {}", 5 * nc);
    for k in 0..nc {
        let _ = writeln!(s, "4 {} {} {} {}", 4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        s += "9\n";
    }
    let _ = writeln!(s, "CELL_DATA {nc}");
    for (name, dir) in [("level_x", 0), ("level_y", 1)] {
        let _ = writeln!(s, "SCALARS {name} int 1\nLOOKUP_TABLE default");
        for &c in &disc.leaves {
            let _ = writeln!(s, "{}", mesh.cells[c].levels[dir]);
        }
    }
    s += "SCALARS aspect_ratio double 1\nLOOKUP_TABLE default\n";
    for &c in &disc.leaves {
        let _ = writeln!(s, "{}", mesh.aspect_ratio(c).as_f64());
    }
    let _ = writeln!(s, "POINT_DATA {}\nSCALARS u double 1\nLOOKUP_TABLE default", 4 * nc);
    for v in values {
        let _ = writeln!(s, "{}", v.as_f64());
    }
    s
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResultsError {
    #[error("{name}: empty file")]
    Empty { name: String },
    #[error("{name}: header lacks column `{column}`")]
    MissingColumn { name: String, column: &'static str },
    #[error("{name}: line {line}: {msg}")]
    Row { name: String, line: usize, msg: String },
    #[error("{name}: no rows with an error value")]
    NoErrors { name: String },
}

/// `(N_tot, error)` per loop of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub fn read_results(name: &str, text: &str) -> Result<ErrorCurve, ResultsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| ResultsError::Row {
        name: name.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().all(|h| h.trim().is_empty()) {
        return Err(ResultsError::Empty { name: name.into() });
    }
    let col = |c: &'static str| {
        header
            .iter()
            .position(|h| h == c)
            .ok_or(ResultsError::MissingColumn {
                name: name.into(),
                column: c,
            })
    };
    let (i_n, i_e) = (col("N_tot")?, col("error")?);
    let mut points = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let row_err = |msg: String| ResultsError::Row {
            name: name.into(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| row_err(e.to_string()))?;
        let n: f64 = rec
            .get(i_n)
            .unwrap_or("")
            .parse()
            .map_err(|_| row_err("bad N_tot".into()))?;
        let e = rec.get(i_e).unwrap_or("");
        if e.is_empty() {
            continue;
        }
        let e: f64 = e.parse().map_err(|_| row_err("bad error".into()))?;
        points.push((n, e));
    }
    if points.is_empty() {
        return Err(ResultsError::NoErrors { name: name.into() });
    }
    Ok(ErrorCurve {
        name: name.into(),
        points,
    })
}
