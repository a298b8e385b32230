//! Run configuration: `key = value` lines, `#` comments, optional
//! `[section]` headers (ignored).

use crate::adapt::{MarkingConfig, RefinementMode};
use crate::mesh::Obstacle;
use crate::problem::{constant_problem, hemker_problem, interior_layer_problem, ConstantData, Domain, ProblemSpec};
use crate::real::Real;
use crate::solver::Settings;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
    #[error("line {line}: {key} = {value} is out of range ({reason})")]
    Range {
        line: usize,
        key: String,
        value: String,
        reason: &'static str,
    },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    InteriorLayer,
    HemkerStationary,
    HemkerQuadratic,
    Custom,
}

impl FromStr for Benchmark {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "interior_layer" => Benchmark::InteriorLayer,
            "hemker_stationary" => Benchmark::HemkerStationary,
            "hemker_quadratic" => Benchmark::HemkerQuadratic,
            "custom" => Benchmark::Custom,
            _ => return Err(()),
        })
    }
}

impl FromStr for RefinementMode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "aniso" | "anisotropic" => RefinementMode::Anisotropic,
            "iso" | "isotropic" => RefinementMode::Isotropic,
            "uniform" => RefinementMode::Uniform,
            _ => return Err(()),
        })
    }
}

impl RefinementMode {
    pub fn name(self) -> &'static str {
        match self {
            RefinementMode::Anisotropic => "anisotropic",
            RefinementMode::Isotropic => "isotropic",
            RefinementMode::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputToggles {
    pub csv: bool,
    pub vtk: bool,
    pub indicators: bool,
    pub timesteps: bool,
}

impl Default for OutputToggles {
    fn default() -> Self {
        Self {
            csv: true,
            vtk: false,
            indicators: false,
            timesteps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub benchmark: Benchmark,
    pub epsilon: T,
    pub settings: Settings<T>,
    pub mode: RefinementMode,
    pub marking: MarkingConfig<T>,
    pub output_dir: PathBuf,
    /// Seed mesh of the unit-square benchmarks.
    pub structured: bool,
    pub obstacle: Obstacle,
    pub initial_slabs: usize,
    pub output: OutputToggles,
    /// Coefficients of the `custom` benchmark.
    pub custom: ConstantData<T>,
}

impl<T: Real> RunConfig<T> {
    /// Defaults of a benchmark before any key is applied.
    pub fn defaults(benchmark: Benchmark) -> Self {
        let f = T::of;
        let marking = |r: f64, c: f64, tr: f64, tc: f64| MarkingConfig {
            theta_space_ref: f(r),
            theta_space_co: f(c),
            theta_time_ref: f(tr),
            theta_time_co: f(tc),
            max_loops: 8,
            tolerance: None,
        };
        let mut cfg = RunConfig {
            benchmark,
            epsilon: f(1e-6),
            settings: Settings::default(),
            mode: RefinementMode::Anisotropic,
            marking: marking(0.2, 0.01, 2.0 / 3.0, 0.0),
            output_dir: PathBuf::from("out"),
            structured: false,
            obstacle: Obstacle::Circle,
            initial_slabs: 20,
            output: OutputToggles::default(),
            custom: ConstantData::default(),
        };
        match benchmark {
            Benchmark::InteriorLayer => {}
            Benchmark::HemkerStationary => {
                cfg.epsilon = f(1e-4);
                cfg.marking = marking(1.0 / 3.0, 0.0, 0.0, 0.0);
                cfg.initial_slabs = 1;
            }
            Benchmark::HemkerQuadratic => {
                cfg.settings.p = 2;
                cfg.obstacle = Obstacle::Square;
                cfg.marking = marking(1.0 / 6.0, 0.0, 0.1, 0.0);
            }
            Benchmark::Custom => {
                cfg.epsilon = cfg.custom.epsilon;
                cfg.structured = true;
            }
        }
        cfg
    }

    fn stationary(&self) -> bool {
        match self.benchmark {
            Benchmark::HemkerStationary => true,
            Benchmark::Custom => self.custom.stationary,
            _ => false,
        }
    }

    pub fn problem(&self) -> ProblemSpec<T> {
        let square = Domain::Rect {
            extents: [[T::zero(), T::zero()], [T::one(), T::one()]],
            nx: if self.structured { 8 } else { 1 },
            ny: if self.structured { 8 } else { 1 },
            structured: self.structured,
            pre_refine: if self.structured { 0 } else { 1 },
        };
        let mut p = match self.benchmark {
            Benchmark::InteriorLayer => interior_layer_problem(self.epsilon),
            Benchmark::HemkerStationary => hemker_problem(true, self.obstacle, self.epsilon),
            Benchmark::HemkerQuadratic => hemker_problem(false, self.obstacle, self.epsilon),
            Benchmark::Custom => constant_problem(ConstantData {
                epsilon: self.epsilon,
                ..self.custom
            }),
        };
        if matches!(self.benchmark, Benchmark::InteriorLayer | Benchmark::Custom) {
            p.domain = square;
        }
        p
    }

    /// Number of slabs of the initial partition (one for stationary runs).
    pub fn slabs(&self) -> usize {
        if self.stationary() {
            1
        } else {
            self.initial_slabs
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.epsilon > T::zero()) {
            return Err(ConfigError::Invalid("epsilon must be positive".into()));
        }
        if self.settings.p == 0 {
            return Err(ConfigError::Invalid("p must be at least one".into()));
        }
        if self.settings.delta0 < T::zero() {
            return Err(ConfigError::Invalid("delta0 must be nonnegative".into()));
        }
        if self.initial_slabs == 0 {
            return Err(ConfigError::Invalid("slabs must be at least one".into()));
        }
        if self.benchmark == Benchmark::Custom && !self.custom.stationary && !(self.custom.t_end > T::zero()) {
            return Err(ConfigError::Invalid("t_end must be positive".into()));
        }
        self.marking
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Canonical `key = value` text; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let b = match self.benchmark {
            Benchmark::InteriorLayer => "interior_layer",
            Benchmark::HemkerStationary => "hemker_stationary",
            Benchmark::HemkerQuadratic => "hemker_quadratic",
            Benchmark::Custom => "custom",
        };
        let m = &self.marking;
        let mut s = format!(
            "benchmark = {b}\nepsilon = {:e}\ndelta0 = {:e}\np = {}\nr = {}\nmode = {}\n\
             theta_space_ref = {:e}\ntheta_space_co = {:e}\ntheta_time_ref = {:e}\ntheta_time_co = {:e}\n\
             max_loops = {}\n",
            self.epsilon.as_f64(),
            self.settings.delta0.as_f64(),
            self.settings.p,
            self.settings.r,
            self.mode.name(),
            m.theta_space_ref.as_f64(),
            m.theta_space_co.as_f64(),
            m.theta_time_ref.as_f64(),
            m.theta_time_co.as_f64(),
            m.max_loops,
        );
        if let Some(t) = m.tolerance {
            s += &format!("tol = {:e}\n", t.as_f64());
        }
        s += &format!(
            "output_dir = {}\nmesh = {}\nobstacle = {}\nslabs = {}\ncsv = {}\nvtk = {}\nindicators = {}\ntimesteps = {}\n",
            self.output_dir.display(),
            if self.structured { "structured" } else { "unstructured" },
            match self.obstacle {
                Obstacle::Circle => "circle",
                Obstacle::Square => "square",
            },
            self.initial_slabs,
            self.output.csv,
            self.output.vtk,
            self.output.indicators,
            self.output.timesteps,
        );
        if self.benchmark == Benchmark::Custom {
            let c = &self.custom;
            s += &format!(
                "b_x = {:e}\nb_y = {:e}\nalpha = {:e}\nsource = {:e}\nboundary = {:e}\ninitial = {:e}\nt_end = {:e}\nstationary = {}\n",
                c.b[0].as_f64(),
                c.b[1].as_f64(),
                c.alpha.as_f64(),
                c.source.as_f64(),
                c.boundary.as_f64(),
                c.initial.as_f64(),
                c.t_end.as_f64(),
                c.stationary
            );
        }
        s
    }
}

/// Decimal number or a fraction `a/b`.
fn parse_number(v: &str) -> Option<f64> {
    match v.split_once('/') {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => v.parse().ok(),
    }
}

const KEYS: &[&str] = &[
    "benchmark", "epsilon", "delta0", "p", "r", "mode", "theta_space_ref", "theta_space_co",
    "theta_time_ref", "theta_time_co", "max_loops", "tol", "output_dir", "mesh", "obstacle",
    "slabs", "csv", "vtk", "indicators", "timesteps", "b_x", "b_y", "alpha", "source",
    "boundary", "initial", "t_end", "stationary",
];

pub fn parse_config<T: Real>(text: &str) -> Result<RunConfig<T>, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() || (l.starts_with('[') && l.ends_with(']')) {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey { line, key: k });
        }
        if entries.iter().any(|e| e.1 == k) {
            return Err(ConfigError::Duplicate { line, key: k });
        }
        entries.push((line, k, v));
    }
    let bench = match entries.iter().find(|e| e.1 == "benchmark") {
        Some((line, k, v)) => v.parse().map_err(|_| ConfigError::Value {
            line: *line,
            key: k.clone(),
            value: v.clone(),
        })?,
        None => Benchmark::InteriorLayer,
    };
    let mut cfg = RunConfig::<T>::defaults(bench);
    for (line, key, value) in &entries {
        let line = *line;
        let bad = || ConfigError::Value {
            line,
            key: key.clone(),
            value: value.clone(),
        };
        let range = |reason| ConfigError::Range {
            line,
            key: key.clone(),
            value: value.clone(),
            reason,
        };
        let num = || parse_number(value).filter(|x| x.is_finite()).ok_or_else(bad);
        let int = || value.parse::<usize>().map_err(|_| bad());
        let boolean = || match value.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(bad()),
        };
        let fraction = || {
            let x = num()?;
            if (0.0..=1.0).contains(&x) {
                Ok(T::of(x))
            } else {
                Err(range("fractions lie in [0, 1]"))
            }
        };
        match key.as_str() {
            "benchmark" => {}
            "epsilon" => {
                let x = num()?;
                if x <= 0.0 {
                    return Err(range("must be positive"));
                }
                cfg.epsilon = T::of(x);
            }
            "delta0" => {
                let x = num()?;
                if x < 0.0 {
                    return Err(range("must be nonnegative"));
                }
                cfg.settings.delta0 = T::of(x);
            }
            "p" => {
                cfg.settings.p = int()?;
                if cfg.settings.p == 0 {
                    return Err(range("degree at least one"));
                }
            }
            "r" => cfg.settings.r = int()?,
            "mode" => cfg.mode = value.parse().map_err(|_| bad())?,
            "theta_space_ref" => cfg.marking.theta_space_ref = fraction()?,
            "theta_space_co" => cfg.marking.theta_space_co = fraction()?,
            "theta_time_ref" => cfg.marking.theta_time_ref = fraction()?,
            "theta_time_co" => cfg.marking.theta_time_co = fraction()?,
            "max_loops" => {
                cfg.marking.max_loops = int()?;
                if cfg.marking.max_loops == 0 {
                    return Err(range("at least one loop"));
                }
            }
            "tol" => {
                let x = num()?;
                if x <= 0.0 {
                    return Err(range("must be positive"));
                }
                cfg.marking.tolerance = Some(T::of(x));
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "mesh" => {
                cfg.structured = match value.as_str() {
                    "structured" => true,
                    "unstructured" => false,
                    _ => return Err(bad()),
                }
            }
            "obstacle" => {
                cfg.obstacle = match value.as_str() {
                    "circle" => Obstacle::Circle,
                    "square" => Obstacle::Square,
                    _ => return Err(bad()),
                }
            }
            "slabs" => {
                cfg.initial_slabs = int()?;
                if cfg.initial_slabs == 0 {
                    return Err(range("at least one slab"));
                }
            }
            "csv" => cfg.output.csv = boolean()?,
            "vtk" => cfg.output.vtk = boolean()?,
            "indicators" => cfg.output.indicators = boolean()?,
            "timesteps" => cfg.output.timesteps = boolean()?,
            "stationary" => cfg.custom.stationary = boolean()?,
            "b_x" => cfg.custom.b[0] = T::of(num()?),
            "b_y" => cfg.custom.b[1] = T::of(num()?),
            "alpha" => cfg.custom.alpha = T::of(num()?),
            "source" => cfg.custom.source = T::of(num()?),
            "boundary" => cfg.custom.boundary = T::of(num()?),
            "initial" => cfg.custom.initial = T::of(num()?),
            "t_end" => {
                let x = num()?;
                if x <= 0.0 {
                    return Err(range("must be positive"));
                }
                cfg.custom.t_end = T::of(x);
            }
            _ => unreachable!("key list checked above"),
        }
        let custom_only = ["b_x", "b_y", "alpha", "source", "boundary", "initial", "t_end", "stationary"];
        if bench != Benchmark::Custom && custom_only.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.clone(),
            });
        }
    }
    cfg.custom.epsilon = cfg.epsilon;
    cfg.validate()?;
    Ok(cfg)
}
