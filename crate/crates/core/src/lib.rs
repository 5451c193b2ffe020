//! Penalized Cox proportional-hazards models for counting-process survival
//! data with time-dependent covariates.

pub mod crossval;
pub mod error;
pub mod likelihood;
pub mod penalty;
pub mod predict;
pub mod simtdc;
pub mod solver;
pub mod survdata;

pub use crossval::{cross_validate, CvMetric, CvOptions, CvResult};
pub use error::{CoxError, Result};
pub use likelihood::LikelihoodContext;
pub use penalty::PenaltyParams;
pub use predict::{baseline_cumhaz, concordance, survival_curves, BaselineHazard, ConcordanceResult, SurvCurve};
pub use simtdc::{simulate, SimConfig, SimOutput};
pub use solver::{fit, fit_path, FitResult, PathResult, SolverConfig};
pub use survdata::{Dataset, SurvRecord};
