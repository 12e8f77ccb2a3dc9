//! Multiply robust (MR), sequentially doubly robust (SDR) and weighting
//! estimators of flip-intervention means, and the ratio flip effect.

mod drivers;
mod flip;
pub mod kernel;
mod report;

pub use drivers::{
    estimate, ipw_estimate, mr_estimate, sdr_estimate, treatment_mean_mr, treatment_mean_sdr,
    CrossFit, Estimation, EstimatorConfig, Method,
};
pub use flip::{flip_effect, flip_effect_with, FlipEffectReport};
pub use kernel::{debiased_pseudo_outcome, eif_parts, phi_t, Step};
pub use report::EstimateReport;

pub use crate::nuisance::Functional;
