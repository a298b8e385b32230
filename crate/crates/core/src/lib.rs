//! Space-time adaptive finite elements for convection-diffusion-reaction
//! problems with anisotropic dual weighted residual error estimation.

pub mod adapt;
pub mod config;
pub mod driver;
pub mod elements;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod real;
pub mod solver;
pub mod time;
pub mod transfer;

pub use real::{Point, Real};

// Double-precision aliases of the common entry points.
pub type Mesh = crate::mesh::Mesh<f64>;
pub type ProblemSpec = crate::problem::ProblemSpec<f64>;
pub type Settings = crate::solver::Settings<f64>;
pub type TimePartition = crate::time::TimePartition<f64>;
pub type SpaceTimeFunction = crate::time::SpaceTimeFunction<f64>;
pub type IndicatorField = crate::estimator::IndicatorField<f64>;
pub type EstimatorTotals = crate::estimator::EstimatorTotals<f64>;
pub type MarkingConfig = crate::adapt::MarkingConfig<f64>;
pub type LoopConfig = crate::adapt::LoopConfig<f64>;
pub type LoopRecord = crate::adapt::LoopRecord<f64>;
pub type DiagnosticReport = crate::problem::DiagnosticReport<f64>;
pub type RunConfig = crate::config::RunConfig<f64>;
pub type LocalField = crate::transfer::LocalField<f64>;
