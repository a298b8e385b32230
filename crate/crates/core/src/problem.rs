//! Problem data: coefficients, boundary and initial data, goal functionals,
//! the benchmark instances and scalar diagnostics.

use crate::elements::gauss_legendre_1d;
use crate::mesh::{build_hemker_mesh, build_rect_mesh, Mesh, Obstacle};
use crate::real::{Point, Real};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub type SpaceTimeFn<T> = Arc<dyn Fn(Point<T>, T) -> T + Send + Sync>;
pub type GradFn<T> = Arc<dyn Fn(Point<T>, T) -> [T; 2] + Send + Sync>;
pub type VectorField<T> = Arc<dyn Fn(Point<T>) -> [T; 2] + Send + Sync>;
pub type SpatialFn<T> = Arc<dyn Fn(Point<T>) -> T + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("diffusion must be positive, got {0:e}")]
    Diffusion(f64),
    #[error("reaction must be non-negative, got {0:e}")]
    Reaction(f64),
    #[error("final time must be positive, got {0:e}")]
    FinalTime(f64),
    #[error("cutoff radius must be positive, got {0:e}")]
    Cutoff(f64),
    #[error("the L2(L2) goal needs an exact solution")]
    UnsupportedGoal,
}

#[derive(Clone)]
pub struct ExactSolution<T> {
    pub value: SpaceTimeFn<T>,
    pub grad: GradFn<T>,
}

/// `δ(x) = α exp(1 − 1/(1 − r²/s²))` for `r < s`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedDirac<T> {
    pub center: Point<T>,
    pub cutoff: T,
    pub alpha: T,
}

impl<T: Real> RegularizedDirac<T> {
    pub fn eval(&self, x: Point<T>) -> T {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let q = (dx * dx + dy * dy) / (self.cutoff * self.cutoff);
        if q >= T::one() {
            return T::zero();
        }
        self.alpha * (T::one() - T::one() / (T::one() - q)).exp()
    }

    /// Bounding box of the support.
    pub fn support(&self) -> [Point<T>; 2] {
        let s = self.cutoff;
        [
            [self.center[0] - s, self.center[1] - s],
            [self.center[0] + s, self.center[1] + s],
        ]
    }
}

/// Dirac approximation normalized to unit mass on the whole plane.
pub fn regularized_dirac<T: Real>(
    center: Point<T>,
    cutoff: T,
) -> Result<RegularizedDirac<T>, ProblemError> {
    if !(cutoff > T::zero()) {
        return Err(ProblemError::Cutoff(cutoff.as_f64()));
    }
    // ∫_0^s e^{1−1/(1−r²/s²)} r dr = s² ∫_0^1 e^{1−1/(1−ρ²)} ρ dρ
    let (g, w) = gauss_legendre_1d::<f64>(12);
    let pieces = 64;
    let mut radial = 0.0;
    for k in 0..pieces {
        let h = 1.0 / pieces as f64;
        for (gi, wi) in g.iter().zip(&w) {
            let rho = (k as f64 + gi) * h;
            let q = rho * rho;
            if q < 1.0 {
                radial += h * wi * (1.0 - 1.0 / (1.0 - q)).exp() * rho;
            }
        }
    }
    let mass = T::of(2.0 * std::f64::consts::PI * radial) * cutoff * cutoff;
    Ok(RegularizedDirac {
        center,
        cutoff,
        alpha: T::one() / mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalKind<T> {
    /// `∫_I (u, e) dt / ‖e‖_Q` with `e` the current error.
    L2L2,
    /// `∫_Ω u dx`, at the final time for transient problems.
    Mean,
    /// `∫_Ω δ u dx` at the final time.
    Point(RegularizedDirac<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalFunctional<T> {
    pub kind: GoalKind<T>,
    /// Exact goal value if known (the L2L2 goal derives its error from the exact solution).
    pub reference: Option<T>,
    /// Constant factor applied to the functional.
    pub scale: T,
}

impl<T: Real> GoalFunctional<T> {
    pub fn new(kind: GoalKind<T>) -> Self {
        Self {
            kind,
            reference: None,
            scale: T::one(),
        }
    }
}

/// Initial mesh of a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain<T> {
    Rect {
        extents: [Point<T>; 2],
        nx: usize,
        ny: usize,
        structured: bool,
        pre_refine: usize,
    },
    Hemker(Obstacle),
}

impl<T: Real> Domain<T> {
    pub fn build(&self) -> Mesh<T> {
        match *self {
            Domain::Rect {
                extents,
                nx,
                ny,
                structured,
                pre_refine,
            } => {
                let mut m = build_rect_mesh(extents, nx, ny, structured)
                    .expect("valid rectangle");
                for _ in 0..pre_refine {
                    let mut f = crate::mesh::RefinementFlags::new();
                    for c in m.leaves() {
                        f.refine_both(c);
                    }
                    m.refine_in_place(&f);
                }
                m
            }
            Domain::Hemker(o) => build_hemker_mesh(o),
        }
    }
}

#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub name: String,
    pub epsilon: T,
    /// Convection field, constant in time.
    pub b: VectorField<T>,
    pub alpha: T,
    pub f: SpaceTimeFn<T>,
    pub u0: SpatialFn<T>,
    /// Data on inhomogeneous Dirichlet facets.
    pub dirichlet: SpaceTimeFn<T>,
    pub t_end: T,
    pub stationary: bool,
    pub exact: Option<ExactSolution<T>>,
    pub goal: GoalFunctional<T>,
    pub domain: Domain<T>,
    /// Physical range of the solution, used to measure over- and undershoots.
    pub range: Option<(T, T)>,
}

impl<T: Real> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("alpha", &self.alpha)
            .field("t_end", &self.t_end)
            .field("stationary", &self.stationary)
            .field("exact", &self.exact.is_some())
            .field("goal", &self.goal)
            .field("domain", &self.domain)
            .finish()
    }
}

impl<T: Real> ProblemSpec<T> {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.epsilon > T::zero()) {
            return Err(ProblemError::Diffusion(self.epsilon.as_f64()));
        }
        if !(self.alpha >= T::zero()) {
            return Err(ProblemError::Reaction(self.alpha.as_f64()));
        }
        if !self.stationary && !(self.t_end > T::zero()) {
            return Err(ProblemError::FinalTime(self.t_end.as_f64()));
        }
        if matches!(self.goal.kind, GoalKind::L2L2) && self.exact.is_none() {
            return Err(ProblemError::UnsupportedGoal);
        }
        Ok(())
    }

    pub fn with_goal(mut self, goal: GoalFunctional<T>) -> Self {
        self.goal = goal;
        self
    }
}

/// Smooth interior layer along `2x − y = ½` transported by `b = (1,2)/√5`
/// on the unit square over `(0,1]`.
pub fn interior_layer_problem<T: Real>(epsilon: T) -> ProblemSpec<T> {
    let five = T::of(5.0);
    let width = (five * epsilon).sqrt();
    let u = move |x: Point<T>, t: T| -> T {
        let e = (T::of(3.0) * (t - T::one())).exp();
        let xi = (T::of(2.0) * x[0] - x[1] - T::of(0.5)) / width;
        e * T::of(0.5) * (T::one() - xi.tanh())
    };
    let grad = move |x: Point<T>, t: T| -> [T; 2] {
        let e = (T::of(3.0) * (t - T::one())).exp();
        let xi = (T::of(2.0) * x[0] - x[1] - T::of(0.5)) / width;
        let s = T::one() / xi.cosh();
        let d = -e * T::of(0.5) * s * s / width;
        [T::of(2.0) * d, -d]
    };
    let f = move |x: Point<T>, t: T| -> T {
        let e = (T::of(3.0) * (t - T::one())).exp();
        let xi = (T::of(2.0) * x[0] - x[1] - T::of(0.5)) / width;
        let s = T::one() / xi.cosh();
        T::of(4.0) * u(x, t) - e * s * s * xi.tanh()
    };
    let b = [T::one() / five.sqrt(), T::of(2.0) / five.sqrt()];
    ProblemSpec {
        name: "interior_layer".into(),
        epsilon,
        b: Arc::new(move |_| b),
        alpha: T::one(),
        f: Arc::new(f),
        u0: Arc::new(move |x| u(x, T::zero())),
        dirichlet: Arc::new(u),
        t_end: T::one(),
        stationary: false,
        exact: Some(ExactSolution {
            value: Arc::new(u),
            grad: Arc::new(grad),
        }),
        goal: GoalFunctional::new(GoalKind::L2L2),
        domain: Domain::Rect {
            extents: [[T::zero(), T::zero()], [T::one(), T::one()]],
            nx: 4,
            ny: 4,
            structured: true,
            pre_refine: 1,
        },
        range: Some((T::zero(), T::one())),
    }
}

/// Constant data for user-defined runs on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantData<T> {
    pub epsilon: T,
    pub b: [T; 2],
    pub alpha: T,
    pub source: T,
    pub boundary: T,
    pub initial: T,
    pub t_end: T,
    pub stationary: bool,
}

impl<T: Real> Default for ConstantData<T> {
    fn default() -> Self {
        Self {
            epsilon: T::of(1e-2),
            b: [T::one(), T::zero()],
            alpha: T::zero(),
            source: T::one(),
            boundary: T::zero(),
            initial: T::zero(),
            t_end: T::one(),
            stationary: false,
        }
    }
}

/// Constant coefficients and data on the unit square with Dirichlet boundary
/// and the domain mean (at final time) as goal.
pub fn constant_problem<T: Real>(d: ConstantData<T>) -> ProblemSpec<T> {
    ProblemSpec {
        name: "custom".into(),
        epsilon: d.epsilon,
        b: Arc::new(move |_| d.b),
        alpha: d.alpha,
        f: Arc::new(move |_, _| d.source),
        u0: Arc::new(move |_| d.initial),
        dirichlet: Arc::new(move |_, _| d.boundary),
        t_end: d.t_end,
        stationary: d.stationary,
        exact: None,
        goal: GoalFunctional::new(GoalKind::Mean),
        domain: Domain::Rect {
            extents: [[T::zero(), T::zero()], [T::one(), T::one()]],
            nx: 4,
            ny: 4,
            structured: true,
            pre_refine: 0,
        },
        range: None,
    }
}

/// Default cutoff radius of the point goal of the transient Hemker problem.
pub const HEMKER_DIRAC_CUTOFF: f64 = 0.2;

/// Flow past an obstacle with `b = (1,0)`, `α = 0`, `f = 0`, `u = 1` on the
/// obstacle. Stationary runs use the domain mean as goal, transient runs
/// (`T = 10`, `u0 = 0`) the regularized value at `(4,1)` at final time.
pub fn hemker_problem<T: Real>(stationary: bool, obstacle: Obstacle, epsilon: T) -> ProblemSpec<T> {
    let goal = if stationary {
        GoalKind::Mean
    } else {
        GoalKind::Point(
            regularized_dirac([T::of(4.0), T::one()], T::of(HEMKER_DIRAC_CUTOFF))
                .expect("positive cutoff"),
        )
    };
    ProblemSpec {
        name: if stationary {
            "hemker_stationary".into()
        } else {
            "hemker_quadratic".into()
        },
        epsilon,
        b: Arc::new(|_| [T::one(), T::zero()]),
        alpha: T::zero(),
        f: Arc::new(|_, _| T::zero()),
        u0: Arc::new(|_| T::zero()),
        dirichlet: Arc::new(|_, _| T::one()),
        t_end: if stationary { T::zero() } else { T::of(10.0) },
        stationary,
        exact: None,
        goal: GoalFunctional::new(goal),
        domain: Domain::Hemker(obstacle),
        range: Some((T::zero(), T::one())),
    }
}

/// Width `y_1 − y_0` of the upper layer at `x = 4`: scanning `y ∈ [0,3]`
/// upward, `y_0` is the first downward crossing of 0.9 and `y_1` the next
/// downward crossing of 0.1. `profile` returns `None` outside the domain.
pub fn layer_width<T: Real>(profile: impl Fn(T) -> Option<T>) -> Option<T> {
    let n = 10_000;
    let h = T::of(3.0) / T::of_usize(n);
    let mut prev: Option<(T, T)> = None;
    let mut y0: Option<T> = None;
    for k in 0..=n {
        let y = h * T::of_usize(k);
        let Some(v) = profile(y) else {
            prev = None;
            continue;
        };
        if let Some((yp, vp)) = prev {
            let level = if y0.is_none() { T::of(0.9) } else { T::of(0.1) };
            if vp >= level && v < level {
                let yc = yp + (vp - level) / (vp - v) * (y - yp);
                match y0 {
                    None => {
                        y0 = Some(yc);
                        // the same sample interval may also cross 0.1
                        if v < T::of(0.1) {
                            let y1 = yp + (vp - T::of(0.1)) / (vp - v) * (y - yp);
                            return Some(y1 - yc);
                        }
                    }
                    Some(a) => return Some(yc - a),
                }
            }
        }
        prev = Some((y, v));
    }
    None
}

/// `(max(v) − hi, lo − min(v))`, each clipped at zero.
pub fn over_undershoot<T: Real>(values: &[T], bounds: (T, T)) -> (T, T) {
    let mut over = T::zero();
    let mut under = T::zero();
    for &v in values {
        over = over.max(v - bounds.1);
        under = under.max(bounds.0 - v);
    }
    (over, under)
}

/// One row of the loop summary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticReport<T> {
    pub loop_index: usize,
    pub n_tot: usize,
    pub n_space: usize,
    pub n_time: usize,
    pub error: Option<T>,
    pub eoc: Option<T>,
    pub eta_hx: T,
    pub eta_hy: T,
    pub eta_h: T,
    pub eta_he: T,
    pub eta_tau: T,
    pub eta_tauh: T,
    pub ieff: Option<T>,
    pub ieff_a: Option<T>,
    pub ar_max: T,
    pub overshoot: T,
    pub undershoot: T,
    pub y_layer: Option<T>,
    pub goal_value: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_layer_values() {
        let p = interior_layer_problem(1e-4f64);
        let u = p.exact.as_ref().unwrap().value.clone();
        for t in [0.0, 0.5, 1.0] {
            let c = (3.0 * (t - 1.0f64)).exp();
            assert!((u([0.5, 0.5], t) - c / 2.0).abs() < 1e-15);
            assert!((u([0.0, 1.0], t) - c).abs() < 1e-12);
            assert!(u([1.0, 0.0], t).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_layer_source_matches_finite_differences() {
        let eps = 1e-2f64;
        let p = interior_layer_problem(eps);
        let u = p.exact.as_ref().unwrap().value.clone();
        let g = p.exact.as_ref().unwrap().grad.clone();
        let b = (p.b)([0.0, 0.0]);
        let h = 1e-4;
        for &(x, y, t) in &[(0.25, 0.25, 1.0), (0.3, 0.1, 0.4), (0.6, 0.7, 0.8)] {
            let ut = (u([x, y], t + h) - u([x, y], t - h)) / (2.0 * h);
            let ux = (u([x + h, y], t) - u([x - h, y], t)) / (2.0 * h);
            let uy = (u([x, y + h], t) - u([x, y - h], t)) / (2.0 * h);
            let lap = (u([x + h, y], t) + u([x - h, y], t) + u([x, y + h], t) + u([x, y - h], t)
                - 4.0 * u([x, y], t))
                / (h * h);
            let f = ut - eps * lap + b[0] * ux + b[1] * uy + u([x, y], t);
            assert!((f - (p.f)([x, y], t)).abs() < 1e-5 * (1.0 + f.abs()));
            let gg = g([x, y], t);
            assert!((gg[0] - ux).abs() < 1e-6 && (gg[1] - uy).abs() < 1e-6);
        }
    }

    #[test]
    fn dirac_normalization() {
        let d = regularized_dirac([0.0f64, 0.0], 0.5).unwrap();
        assert!((d.eval([0.0, 0.0]) - d.alpha).abs() < 1e-15);
        assert_eq!(d.eval([0.5, 0.0]), 0.0);
        // independent radial integration by the trapezoidal rule
        let n = 200_000;
        let s = 0.5f64;
        let mut m = 0.0;
        for k in 1..n {
            let r = s * k as f64 / n as f64;
            m += (1.0 - 1.0 / (1.0 - r * r / (s * s))).exp() * r;
        }
        m *= s / n as f64 * 2.0 * std::f64::consts::PI;
        assert!((d.alpha - 1.0 / m).abs() < 1e-8 * d.alpha);
        assert!(regularized_dirac([0.0f64, 0.0], 0.0).is_err());
    }

    #[test]
    fn layer_width_profiles() {
        let w = layer_width(|y: f64| Some(1.0 - y)).unwrap();
        assert!((w - 0.8).abs() < 1e-12);
        // u = ½(1 − tanh((y − 1)/d)): crossings at 1 + d·atanh(∓0.8)
        let d = 0.05;
        let w = layer_width(|y: f64| Some(0.5 * (1.0 - ((y - 1.0) / d).tanh()))).unwrap();
        let want = 2.0 * d * 0.8f64.atanh();
        assert!((w - want).abs() < 1e-4);
        assert!(layer_width(|_y: f64| Some(0.5)).is_none());
    }

    #[test]
    fn over_and_undershoot() {
        assert_eq!(over_undershoot(&[0.0, 0.5, 1.0], (0.0, 1.0)), (0.0, 0.0));
        let (o, u) = over_undershoot(&[1.0044, 0.2, -0.0153], (0.0, 1.0));
        assert!((o - 0.0044f64).abs() < 1e-15 && (u - 0.0153f64).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut p = interior_layer_problem(1e-4f64);
        assert!(p.validate().is_ok());
        p.epsilon = 0.0;
        assert!(p.validate().is_err());
        let mut h = hemker_problem::<f64>(true, Obstacle::Square, 1e-3);
        assert!(h.validate().is_ok());
        h.goal.kind = GoalKind::L2L2;
        assert_eq!(h.validate(), Err(ProblemError::UnsupportedGoal));
    }
}
