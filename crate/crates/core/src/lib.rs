//! Estimation of longitudinal flip-intervention effects.
//!
//! A flip intervention leaves subjects already at the target treatment alone
//! and flips the others with a probability that depends on their propensity
//! of taking the target arm. Weighted and trimmed effects then remain
//! identified under positivity violations. The crate provides:
//!
//! * [`weights`]: smooth flipping-probability functions, intervention
//!   propensities and density ratios;
//! * [`panel`]: longitudinal panel data, CSV ingestion and fold assignment;
//! * [`nuisance`]: cross-fitted propensity and sequential-regression models;
//! * [`estimators`]: multiply robust and sequentially doubly robust
//!   estimators of intervention means and treatment means, and the ratio
//!   flip effect;
//! * [`oracle`]: exact enumeration over finite-state worlds;
//! * [`simharness`]: the two-timepoint simulation design and its coverage grid.
//!
//! The weight catalog, influence-function kernels and exact oracle are
//! generic over [`Scalar`]; everything that touches data is `f64`.

pub mod error;
pub mod estimators;
pub mod nuisance;
pub mod oracle;
pub mod panel;
pub mod rng;
pub mod scalar;
pub mod simharness;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use estimators::{
    flip_effect, ipw_estimate, mr_estimate, sdr_estimate, treatment_mean_mr, treatment_mean_sdr,
    EstimateReport, EstimatorConfig, FlipEffectReport, Functional,
};
pub use nuisance::{Backend, LearnedNuisance, NuisanceProvider, NuisanceSet};
pub use oracle::{DiscreteWorld, OracleWeight};
pub use panel::{assign_folds, FoldAssignment, HistoryView, PanelDataset, Trajectory};
pub use weights::{IdentificationCondition, SmoothWeight, TargetRegime};

/// Smooth weight over `f64`.
pub type Weight = SmoothWeight<f64>;
/// Finite-state world over `f64`.
pub type World = DiscreteWorld<f64>;
