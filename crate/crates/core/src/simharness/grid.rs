//! The coverage grid: for every `(α_π, α_m, n)` cell, `R` replications of
//! sampling, corruption and estimation, scored against the quadrature
//! truth.
//!
//! Replication `r` of a cell draws from the seed
//! `derive_seed(seed, [n, bits(α_π), bits(α_m), r])`, so results depend on
//! neither the scheduling order nor which other cells are in the grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_dgp, Dgp};
use super::noisy::{CorruptedDgpNuisance, NoiseSpec};
use super::truth::true_psi_dgp;
use crate::error::{Error, Result};
use crate::estimators::{CrossFit, EstimatorConfig, Method};
use crate::nuisance::{Functional, NoiseShape};
use crate::rng::derive_seed;
use crate::weights::{SmoothWeight, TargetRegime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub alpha_pi: f64,
    pub alpha_m: f64,
    pub n: usize,
}

fn default_sizes() -> Vec<usize> {
    vec![1000, 5000, 20000]
}
fn default_rates() -> Vec<f64> {
    vec![0.1, 0.25, 0.5]
}
fn default_replications() -> usize {
    250
}
fn default_weight() -> String {
    "smooth-trim:10".into()
}
fn default_regimes() -> Vec<String> {
    vec!["11".into(), "00".into()]
}
fn default_estimator() -> String {
    "sdr".into()
}
fn default_seed() -> u64 {
    1
}
fn default_level() -> f64 {
    0.95
}
fn default_folds() -> usize {
    2
}

/// Coverage experiment. Without `cells`, the grid is the product
/// `alpha_pi × alpha_m × sample_sizes`. One regime estimates its mean; two
/// regimes estimate the difference of their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_rates")]
    pub alpha_pi: Vec<f64>,
    #[serde(default = "default_rates")]
    pub alpha_m: Vec<f64>,
    #[serde(default)]
    pub cells: Option<Vec<CellSpec>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_weight")]
    pub weight: String,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<String>,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Propensity floor of the design; 0 keeps its positivity violations.
    #[serde(default)]
    pub floor: f64,
    /// Shape of the nuisance errors, `centered` or `shifted`.
    #[serde(default)]
    pub noise: NoiseShape,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sample_sizes: default_sizes(),
            alpha_pi: default_rates(),
            alpha_m: default_rates(),
            cells: None,
            replications: default_replications(),
            weight: default_weight(),
            regimes: default_regimes(),
            estimator: default_estimator(),
            seed: default_seed(),
            level: default_level(),
            folds: default_folds(),
            floor: 0.0,
            noise: NoiseShape::Centered,
        }
    }
}

/// Parsed pieces of a validated configuration.
struct Plan {
    cells: Vec<CellSpec>,
    weight: SmoothWeight<f64>,
    regimes: Vec<TargetRegime>,
    method: Method,
    dgp: Dgp,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.plan()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn cell_specs(&self) -> Vec<CellSpec> {
        match &self.cells {
            Some(c) => c.clone(),
            None => {
                let mut out = Vec::new();
                for &alpha_pi in &self.alpha_pi {
                    for &alpha_m in &self.alpha_m {
                        for &n in &self.sample_sizes {
                            out.push(CellSpec { alpha_pi, alpha_m, n });
                        }
                    }
                }
                out
            }
        }
    }

    fn plan(&self) -> Result<Plan> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        let cells = self.cell_specs();
        if cells.is_empty() {
            return bad("empty grid".into());
        }
        for c in &cells {
            NoiseSpec::new(c.alpha_pi, c.alpha_m)?;
            if c.n < 100 {
                return bad(format!("sample size {} below 100", c.n));
            }
        }
        if !(1..=2).contains(&self.regimes.len()) {
            return bad("give one regime, or two to contrast".into());
        }
        let regimes = self
            .regimes
            .iter()
            .map(|r| r.parse::<TargetRegime>())
            .collect::<Result<Vec<_>>>()?;
        if regimes.iter().any(|r| r.horizon() != 2) {
            return bad("regimes must have length 2".into());
        }
        if !(0.0..0.5).contains(&self.floor) {
            return bad(format!("floor {} outside [0, 0.5)", self.floor));
        }
        Ok(Plan {
            cells,
            weight: self.weight.parse()?,
            regimes,
            method: self.estimator.parse()?,
            dgp: Dgp { floor: self.floor },
        })
    }

    fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            folds: self.folds,
            seed,
            clip: 0.0,
            level: self.level,
            assume_positivity: self.floor > 0.0,
            ..EstimatorConfig::default()
        }
    }

    /// True value of the target.
    pub fn truth(&self) -> Result<f64> {
        let plan = self.plan()?;
        target_truth(&plan)
    }
}

fn target_truth(plan: &Plan) -> Result<f64> {
    let mut v = true_psi_dgp(&plan.dgp, &plan.regimes[0], &plan.weight)?;
    if let Some(b) = plan.regimes.get(1) {
        v -= true_psi_dgp(&plan.dgp, b, &plan.weight)?;
    }
    Ok(v)
}

/// One replication's estimate and interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rmse_pi: f64,
    pub rmse_m: f64,
}

fn replication_seed(root: u64, cell: &CellSpec, r: usize) -> u64 {
    derive_seed(root, &[cell.n as u64, cell.alpha_pi.to_bits(), cell.alpha_m.to_bits(), r as u64])
}

fn run_one(cfg: &ExperimentConfig, plan: &Plan, cell: &CellSpec, r: usize) -> Result<Replication> {
    let seed = replication_seed(cfg.seed, cell, r);
    let sim = generate_dgp(&plan.dgp, cell.n, derive_seed(seed, &[1]))?;
    let spec = NoiseSpec { shape: cfg.noise, ..NoiseSpec::new(cell.alpha_pi, cell.alpha_m)? };
    let provider = CorruptedDgpNuisance::new(plan.dgp, &sim, spec, derive_seed(seed, &[2]))?;
    let (rmse_pi, rmse_m) = provider.corruption_rmse();
    let nf = cell.n as f64;
    for (got, alpha) in [(rmse_pi, cell.alpha_pi), (rmse_m, cell.alpha_m)] {
        let want = 2f64.sqrt() * nf.powf(-alpha);
        if (got - want).abs() > 0.25 * want {
            return Err(Error::Precondition(format!(
                "corruption RMSE {got} is not within 25% of {want}"
            )));
        }
    }
    let est_cfg = cfg.estimator_config(derive_seed(seed, &[3]));
    let cross = CrossFit::new(&sim.data, &provider, &est_cfg)?;
    let mut report =
        cross.run(&plan.regimes[0], &plan.weight, Functional::Outcome, plan.method)?.report;
    if let Some(b) = plan.regimes.get(1) {
        let other = cross.run(b, &plan.weight, Functional::Outcome, plan.method)?.report;
        report = report.contrast(&other)?;
    }
    Ok(Replication {
        estimate: report.psi_hat,
        ci_low: report.ci_low,
        ci_high: report.ci_high,
        rmse_pi,
        rmse_m,
    })
}

/// Runs replication `r` of `cell` on its own.
pub fn replicate(cfg: &ExperimentConfig, cell: &CellSpec, r: usize) -> Result<Replication> {
    let plan = cfg.plan()?;
    run_one(cfg, &plan, cell, r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub alpha_pi: f64,
    pub alpha_m: f64,
    pub n: usize,
    pub replications: usize,
    /// Replications that failed; excluded from the summaries below.
    pub failures: usize,
    pub truth: f64,
    pub coverage: f64,
    /// `sqrt(coverage (1 - coverage) / completed)`.
    pub se: f64,
    pub mean_bias: f64,
    pub mean_abs_error: f64,
    pub mean_width: f64,
    pub first_error: String,
}

fn summarize(cell: &CellSpec, truth: f64, reps: &[Result<Replication>]) -> CoverageCell {
    let ok: Vec<&Replication> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let first_error = reps
        .iter()
        .find_map(|r| r.as_ref().err().map(|e| e.to_string()))
        .unwrap_or_default();
    let m = ok.len() as f64;
    let avg = |f: &dyn Fn(&Replication) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / m;
    let coverage = avg(&|r| f64::from(u8::from(r.ci_low <= truth && truth <= r.ci_high)));
    CoverageCell {
        alpha_pi: cell.alpha_pi,
        alpha_m: cell.alpha_m,
        n: cell.n,
        replications: reps.len(),
        failures: reps.len() - ok.len(),
        truth,
        coverage,
        se: (coverage * (1.0 - coverage) / m).sqrt(),
        mean_bias: avg(&|r| r.estimate - truth),
        mean_abs_error: avg(&|r| (r.estimate - truth).abs()),
        mean_width: avg(&|r| r.ci_high - r.ci_low),
        first_error,
    }
}

/// Runs every cell; replication failures are counted per cell.
pub fn run_coverage_grid(cfg: &ExperimentConfig) -> Result<Vec<CoverageCell>> {
    let plan = cfg.plan()?;
    let truth = target_truth(&plan)?;
    let tasks: Vec<(usize, usize)> = (0..plan.cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Replication>> = tasks
        .par_iter()
        .map(|&(c, r)| run_one(cfg, &plan, &plan.cells[c], r))
        .collect();
    Ok(plan
        .cells
        .iter()
        .zip(results.chunks(cfg.replications))
        .map(|(cell, reps)| summarize(cell, truth, reps))
        .collect())
}

/// One row per cell.
pub fn write_cells_csv<W: Write>(cells: &[CoverageCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format for faceted plots: rate row, rate column, n, coverage, se.
pub fn write_long_csv<W: Write>(cells: &[CoverageCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rate_row", "rate_col", "n", "coverage", "se"])?;
    for c in cells {
        w.write_record([
            format!("alpha_pi={}", c.alpha_pi),
            format!("alpha_m={}", c.alpha_m),
            c.n.to_string(),
            c.coverage.to_string(),
            c.se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_27_cells() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.cell_specs().len(), 27);
        let round = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn invalid_configs() {
        assert!(ExperimentConfig::parse("replications = 0").is_err());
        assert!(ExperimentConfig::parse("alpha_pi = [0.0]").is_err());
        assert!(ExperimentConfig::parse("sample_sizes = [50]").is_err());
        assert!(ExperimentConfig::parse("colour = 1").is_err());
    }

    #[test]
    fn single_replication_is_degenerate() {
        let cfg = ExperimentConfig {
            cells: Some(vec![CellSpec { alpha_pi: 0.5, alpha_m: 0.5, n: 400 }]),
            replications: 1,
            ..ExperimentConfig::default()
        };
        let cells = run_coverage_grid(&cfg).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].coverage == 0.0 || cells[0].coverage == 1.0);
        assert_eq!(cells[0].se, 0.0);
        assert_eq!(cells[0].failures, 0, "{}", cells[0].first_error);
    }
}
