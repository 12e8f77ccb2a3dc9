use std::fmt::Write as _;

use super::drivers::Method;
use crate::error::Result;
use crate::stats;

/// Point estimate, variance and Wald interval of one functional.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub label: String,
    pub method: Method,
    pub psi_hat: f64,
    pub sigma2_hat: f64,
    pub n_eval: usize,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Per-observation influence values; `sigma2_hat` is their mean square.
    pub influence: Vec<f64>,
    /// Per-observation uncentered scores; their mean is `psi_hat`.
    pub scores: Vec<f64>,
}

impl EstimateReport {
    pub fn new(
        label: String,
        method: Method,
        psi_hat: f64,
        sigma2_hat: f64,
        level: f64,
        influence: Vec<f64>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        let n_eval = scores.len();
        let half = stats::z_critical(level)? * (sigma2_hat / n_eval as f64).sqrt();
        Ok(EstimateReport {
            label,
            method,
            psi_hat,
            sigma2_hat,
            n_eval,
            level,
            ci_low: psi_hat - half,
            ci_high: psi_hat + half,
            influence,
            scores,
        })
    }

    /// Builds a report from per-observation scores with centered variance.
    pub fn from_scores(label: String, method: Method, scores: Vec<f64>, level: f64) -> Result<Self> {
        let psi = stats::mean(&scores);
        let influence: Vec<f64> = scores.iter().map(|s| s - psi).collect();
        let s2 = stats::mean_sq(&influence);
        EstimateReport::new(label, method, psi, s2, level, influence, scores)
    }

    /// `self - other` on the same observations; variance of the centered
    /// score difference.
    pub fn contrast(&self, other: &EstimateReport) -> Result<Self> {
        assert_eq!(self.n_eval, other.n_eval, "contrast needs the same observations");
        let scores = self.scores.iter().zip(&other.scores).map(|(a, b)| a - b).collect();
        EstimateReport::from_scores(
            format!("{} - {}", self.label, other.label),
            self.method,
            scores,
            self.level,
        )
    }

    pub fn se(&self) -> f64 {
        (self.sigma2_hat / self.n_eval as f64).sqrt()
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// `key=value` lines under `prefix`.
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{prefix}.label={}", self.label);
        let _ = writeln!(s, "{prefix}.estimator={}", self.method);
        let _ = writeln!(s, "{prefix}.estimate={}", self.psi_hat);
        let _ = writeln!(s, "{prefix}.variance={}", self.sigma2_hat);
        let _ = writeln!(s, "{prefix}.se={}", self.se());
        let _ = writeln!(s, "{prefix}.n={}", self.n_eval);
        let _ = writeln!(s, "{prefix}.level={}", self.level);
        let _ = writeln!(s, "{prefix}.ci_low={}", self.ci_low);
        let _ = writeln!(s, "{prefix}.ci_high={}", self.ci_high);
        if self.method == Method::Ipw {
            let _ = writeln!(s, "{prefix}.robust=false");
        }
        s
    }
}
