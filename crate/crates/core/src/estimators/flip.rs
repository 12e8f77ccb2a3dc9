//! Ratio flip effect: outcome-mean contrast over the average absolute
//! per-timepoint change in treatment, with a delta-method interval.

use std::fmt::Write as _;

use super::drivers::{CrossFit, EstimatorConfig, Method};
use super::report::EstimateReport;
use crate::error::{Error, Result};
use crate::nuisance::{Functional, NuisanceProvider};
use crate::panel::PanelDataset;
use crate::stats;
use crate::weights::{SmoothWeight, TargetRegime};

#[derive(Debug, Clone)]
pub struct FlipEffectReport {
    pub regime_a: TargetRegime,
    pub regime_b: TargetRegime,
    pub psi_a: EstimateReport,
    pub psi_b: EstimateReport,
    /// `ψ̂(a) - ψ̂(a')`.
    pub numerator: EstimateReport,
    /// Treatment-mean differences `Δ̂_t`, one per timepoint.
    pub deltas: Vec<EstimateReport>,
    /// `(1/T) Σ |Δ̂_t|` with its influence values.
    pub denominator: EstimateReport,
    pub ratio: f64,
    pub ratio_se: f64,
    pub ratio_ci: (f64, f64),
    pub ratio_influence: Vec<f64>,
    pub level: f64,
    pub warnings: Vec<String>,
}

impl FlipEffectReport {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "contrast={}:{}", self.regime_a, self.regime_b);
        s.push_str(&self.psi_a.to_kv("psi_a"));
        s.push_str(&self.psi_b.to_kv("psi_b"));
        s.push_str(&self.numerator.to_kv("numerator"));
        for (t, d) in self.deltas.iter().enumerate() {
            s.push_str(&d.to_kv(&format!("delta.t{}", t + 1)));
        }
        s.push_str(&self.denominator.to_kv("denominator"));
        let _ = writeln!(s, "ratio.estimate={}", self.ratio);
        let _ = writeln!(s, "ratio.se={}", self.ratio_se);
        let _ = writeln!(s, "ratio.level={}", self.level);
        let _ = writeln!(s, "ratio.ci_low={}", self.ratio_ci.0);
        let _ = writeln!(s, "ratio.ci_high={}", self.ratio_ci.1);
        for w in &self.warnings {
            let _ = writeln!(s, "warning={w}");
        }
        s
    }
}

/// Combines the outcome-mean and treatment-mean estimates of two regimes.
/// Both regimes use the same weight kind, evaluated at each regime's own
/// target propensity.
pub fn flip_effect_with<P: NuisanceProvider>(
    plan: &CrossFit<'_, P>,
    regime_a: &TargetRegime,
    regime_b: &TargetRegime,
    weight: &SmoothWeight<f64>,
    method: Method,
) -> Result<FlipEffectReport> {
    if method == Method::Ipw {
        return Err(Error::Config("the flip effect needs the mr or sdr estimator".into()));
    }
    let cfg = plan.config();
    let t_max = plan.data().horizon();
    let psi_a = plan.run(regime_a, weight, Functional::Outcome, method)?.report;
    let psi_b = plan.run(regime_b, weight, Functional::Outcome, method)?.report;
    let numerator = psi_a.contrast(&psi_b)?;

    let mut deltas = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let f = Functional::TreatmentMean { t_star: t };
        let da = plan.run(regime_a, weight, f, method)?.report;
        let db = plan.run(regime_b, weight, f, method)?.report;
        let mut d = da.contrast(&db)?;
        d.label = format!("delta{t}");
        deltas.push(d);
    }

    let mut warnings = Vec::new();
    for (t, d) in deltas.iter().enumerate() {
        if d.psi_hat.abs() <= cfg.tau_den {
            warnings.push(format!(
                "|delta_{}| = {:.3e} is within tau_den = {}; its sign is unstable",
                t + 1,
                d.psi_hat.abs(),
                cfg.tau_den
            ));
        }
    }
    let n = numerator.n_eval;
    let den_scores: Vec<f64> = (0..n)
        .map(|i| {
            deltas.iter().map(|d| d.psi_hat.signum() * d.scores[i]).sum::<f64>() / t_max as f64
        })
        .collect();
    let denominator =
        EstimateReport::from_scores("denominator".into(), method, den_scores, cfg.level)?;
    let d_hat = denominator.psi_hat;
    if !(d_hat > cfg.tau_den) {
        return Err(Error::UndefinedEstimand(format!(
            "average absolute treatment change {d_hat:.3e} does not exceed tau_den = {}",
            cfg.tau_den
        )));
    }

    let ratio = numerator.psi_hat / d_hat;
    let ratio_influence: Vec<f64> = (0..n)
        .map(|i| (numerator.influence[i] - ratio * denominator.influence[i]) / d_hat)
        .collect();
    let var = stats::mean_sq(&ratio_influence);
    let ratio_se = (var / n as f64).sqrt();
    let z = stats::z_critical(cfg.level)?;
    Ok(FlipEffectReport {
        regime_a: regime_a.clone(),
        regime_b: regime_b.clone(),
        psi_a,
        psi_b,
        numerator,
        deltas,
        denominator,
        ratio,
        ratio_se,
        ratio_ci: (ratio - z * ratio_se, ratio + z * ratio_se),
        ratio_influence,
        level: cfg.level,
        warnings,
    })
}

pub fn flip_effect<P: NuisanceProvider>(
    data: &PanelDataset,
    regime_a: &TargetRegime,
    regime_b: &TargetRegime,
    weight: &SmoothWeight<f64>,
    method: Method,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<FlipEffectReport> {
    let plan = CrossFit::new(data, provider, cfg)?;
    flip_effect_with(&plan, regime_a, regime_b, weight, method)
}
