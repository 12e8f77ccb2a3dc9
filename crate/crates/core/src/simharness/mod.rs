//! Two-timepoint simulation design with exact positivity violations, its
//! true intervention means by quadrature, nuisances corrupted at prescribed
//! rates, and the coverage grid built on them.
//!
//! ```text
//! X1 ~ U(0,1)
//! A1 | X1 ~ Bern(g(X1)),   g(u) = 1(0.1 <= u <= 0.9) (u - 0.1) / 0.8
//! X2 = (X1 + A1) / 2
//! A2 | H2 ~ Bern(g(X2))
//! Y = X1 + X2 + A1 + A2 + N(0,1)
//! ```

mod dgp;
mod grid;
mod noisy;
mod truth;

pub use dgp::{generate_dgp, Dgp, SimData};
pub use grid::{
    replicate, run_coverage_grid, write_cells_csv, write_long_csv, CellSpec, CoverageCell,
    ExperimentConfig, Replication,
};
pub use noisy::{CorruptedDgpNuisance, NoiseSpec};
pub use truth::{adaptive_simpson, true_psi_dgp, true_treatment_mean_dgp};
