//! Cross-fitted estimation of one intervention functional.
//!
//! For each rotation `k`, every model is trained on the folds other than
//! `k` and predicts for the whole sample; pseudo-outcomes are built across
//! the whole sample and the observations of fold `k` are scored. Each
//! observation therefore contributes exactly one score, from the rotation
//! that held it out, and the point estimate is the mean score (the
//! fold-size weighted average of the per-rotation estimates).

use rayon::prelude::*;

use super::kernel::{debiased, debiased_pseudo_outcome, eif_parts, plug_in, step, Step};
use super::report::EstimateReport;
use crate::error::{Error, Result};
use crate::nuisance::{
    clip_probability, FitContext, Functional, NuisanceProvider, NuisanceSet, SeqTask,
};
use crate::panel::{assign_folds, FoldAssignment, PanelDataset};
use crate::weights::{IdentificationCondition, SmoothWeight, TargetRegime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plug-in sequential regressions plus the influence-function correction.
    Mr,
    /// Regressions of debiased pseudo-outcomes.
    Sdr,
    /// Weighted outcome mean; no correction, not robust.
    Ipw,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mr" => Ok(Method::Mr),
            "sdr" => Ok(Method::Sdr),
            "ipw" => Ok(Method::Ipw),
            other => Err(Error::Config(format!("unknown estimator '{other}' (mr|sdr|ipw)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Mr => "mr",
            Method::Sdr => "sdr",
            Method::Ipw => "ipw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub folds: usize,
    pub seed: u64,
    /// Estimated propensities are clipped into `[clip, 1 - clip]`.
    pub clip: f64,
    pub level: f64,
    /// Needed for weights that are only identified under target positivity.
    pub assume_positivity: bool,
    /// Flip-effect denominator tolerance.
    pub tau_den: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            folds: 2,
            seed: 0,
            clip: 0.01,
            level: 0.95,
            assume_positivity: false,
            tau_den: 1e-3,
        }
    }
}

/// An estimate together with the nuisance values that produced it.
#[derive(Debug, Clone)]
pub struct Estimation {
    pub report: EstimateReport,
    pub nuisances: NuisanceSet,
}

struct RotationOut {
    members: Vec<usize>,
    scores: Vec<f64>,
    influence: Vec<f64>,
    pi: Vec<Vec<f64>>,
    steps: Vec<Vec<Step<f64>>>,
    m: Vec<Vec<[f64; 2]>>,
}

/// Cross-fitting plan with propensities already fit for every rotation, so
/// several functionals can share them.
pub struct CrossFit<'a, P: NuisanceProvider> {
    data: &'a PanelDataset,
    provider: &'a P,
    cfg: EstimatorConfig,
    folds: FoldAssignment,
    train: Vec<Vec<usize>>,
    /// `[rotation][t-1][i]`, clipped.
    pi: Vec<Vec<Vec<f64>>>,
}

impl<'a, P: NuisanceProvider> CrossFit<'a, P> {
    pub fn new(data: &'a PanelDataset, provider: &'a P, cfg: &EstimatorConfig) -> Result<Self> {
        if !(0.0..=0.1).contains(&cfg.clip) {
            return Err(Error::Config(format!("clip {} outside [0, 0.1]", cfg.clip)));
        }
        crate::stats::z_critical(cfg.level)?;
        let folds = assign_folds(data.n(), cfg.folds, cfg.seed)?;
        let train: Vec<Vec<usize>> = (0..folds.k()).map(|k| folds.complement(k)).collect();
        let pi = (0..folds.k())
            .into_par_iter()
            .map(|k| {
                let ctx = FitContext { data, train: &train[k], rotation: k };
                (1..=data.horizon())
                    .map(|t| {
                        let p = provider.propensity(&ctx, t)?;
                        if p.len() != data.n() {
                            return Err(Error::Backend {
                                t,
                                fold: k,
                                msg: "propensity length differs from n".into(),
                            });
                        }
                        Ok(p.into_iter().map(|v| clip_probability(v, cfg.clip)).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CrossFit { data, provider, cfg: cfg.clone(), folds, train, pi })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn data(&self) -> &PanelDataset {
        self.data
    }

    fn validate(
        &self,
        regime: &TargetRegime,
        weight: &SmoothWeight<f64>,
        functional: Functional,
    ) -> Result<()> {
        let t_max = self.data.horizon();
        if regime.horizon() != t_max {
            return Err(Error::Config(format!(
                "regime {regime} has length {} but the panel has T={t_max}",
                regime.horizon()
            )));
        }
        if let Functional::TreatmentMean { t_star } = functional {
            if t_star == 0 || t_star > t_max {
                return Err(Error::Domain(format!("t* = {t_star} outside 1..={t_max}")));
            }
        }
        if weight.identification() == IdentificationCondition::RequiresPositivity
            && !self.cfg.assume_positivity
        {
            return Err(Error::Identification {
                t: 0,
                history: None,
                msg: format!(
                    "weight '{weight}' needs positivity of the target arm; assert it explicitly to proceed"
                ),
            });
        }
        if !weight.has_bounded_derivative() && self.cfg.clip <= 0.0 {
            return Err(Error::Config(format!(
                "weight '{weight}' has an unbounded derivative at 0 and 1; use a positive clip"
            )));
        }
        Ok(())
    }

    pub fn run(
        &self,
        regime: &TargetRegime,
        weight: &SmoothWeight<f64>,
        functional: Functional,
        method: Method,
    ) -> Result<Estimation> {
        self.validate(regime, weight, functional)?;
        let outs = (0..self.folds.k())
            .into_par_iter()
            .map(|k| self.rotation(k, regime, weight, functional, method))
            .collect::<Result<Vec<_>>>()?;

        let n = self.data.n();
        let l = functional.last(self.data.horizon());
        let mut scores = vec![0.0; n];
        let mut influence = vec![0.0; n];
        let mut set = NuisanceSet {
            pi_hat: vec![vec![0.0; n]; l],
            q_hat: vec![vec![[0.0; 2]; n]; l],
            r_hat: vec![vec![0.0; n]; l],
            m_hat: vec![vec![[0.0; 2]; n]; l],
            provenance: vec![0; n],
            folds: self.folds.clone(),
        };
        for (k, out) in outs.into_iter().enumerate() {
            for (j, &i) in out.members.iter().enumerate() {
                scores[i] = out.scores[j];
                influence[i] = out.influence[j];
                set.provenance[i] = k;
                for t in 0..l {
                    set.pi_hat[t][i] = out.pi[t][i];
                    set.q_hat[t][i] = out.steps[t][i].q;
                    set.r_hat[t][i] = out.steps[t][i].r;
                    set.m_hat[t][i] = out.m.get(t).map_or([0.0; 2], |m| m[i]);
                }
            }
        }

        let psi = crate::stats::mean(&scores);
        let (influence, sigma2) = match method {
            // uncentered, with each fold's own plug-in mean inside φ̂
            Method::Mr => {
                let s2 = crate::stats::mean_sq(&influence);
                (influence, s2)
            }
            Method::Sdr | Method::Ipw => {
                let centered: Vec<f64> = scores.iter().map(|s| s - psi).collect();
                let s2 = crate::stats::mean_sq(&centered);
                (centered, s2)
            }
        };
        let label = match functional {
            Functional::Outcome => format!("psi[{regime}]"),
            Functional::TreatmentMean { t_star } => format!("D{t_star}[{regime}]"),
        };
        let report = EstimateReport::new(
            label,
            method,
            psi,
            sigma2,
            self.cfg.level,
            influence,
            scores,
        )?;
        Ok(Estimation { report, nuisances: set })
    }

    fn rotation(
        &self,
        k: usize,
        regime: &TargetRegime,
        weight: &SmoothWeight<f64>,
        functional: Functional,
        method: Method,
    ) -> Result<RotationOut> {
        let data = self.data;
        let n = data.n();
        let l = functional.last(data.horizon());
        let ctx = FitContext { data, train: &self.train[k], rotation: k };

        let mut steps: Vec<Vec<Step<f64>>> = Vec::with_capacity(l);
        for t in 1..=l {
            let pi = &self.pi[k][t - 1];
            let row = (0..n)
                .map(|i| {
                    step(regime.at(t), data.treatment(i, t), pi[i], weight).map_err(|e| match e {
                        Error::Identification { msg, .. } => Error::Identification {
                            t,
                            history: Some(format!("subject {}", data.ids()[i])),
                            msg,
                        },
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            steps.push(row);
        }
        let treat: Vec<Vec<u8>> =
            (0..n).map(|i| (1..=l).map(|t| data.treatment(i, t)).collect()).collect();
        let terminal: Vec<f64> = match functional {
            Functional::Outcome => data.outcomes(),
            Functional::TreatmentMean { t_star } => {
                (0..n).map(|i| f64::from(data.treatment(i, t_star))).collect()
            }
        };
        let members = self.folds.members(k);

        if method == Method::Ipw {
            let scores = members
                .iter()
                .map(|&i| match functional {
                    Functional::Outcome => {
                        terminal[i] * (0..l).map(|t| steps[t][i].r).product::<f64>()
                    }
                    Functional::TreatmentMean { .. } => {
                        steps[l - 1][i].q[1] * (0..l - 1).map(|t| steps[t][i].r).product::<f64>()
                    }
                })
                .collect::<Vec<_>>();
            return Ok(RotationOut {
                influence: vec![0.0; members.len()],
                members,
                scores,
                pi: self.pi[k][..l].to_vec(),
                steps,
                m: Vec::new(),
            });
        }

        let mut m: Vec<Vec<[f64; 2]>> = vec![Vec::new(); l];
        let mut target = terminal.clone();
        for t in (1..=l).rev() {
            let fixed = matches!(functional, Functional::TreatmentMean { t_star } if t_star == t);
            let mt: Vec<[f64; 2]> = if fixed {
                vec![[0.0, 1.0]; n]
            } else {
                let task = SeqTask {
                    t,
                    regime,
                    weight,
                    functional,
                    debiased: method == Method::Sdr,
                    target: &target,
                };
                let [m0, m1] = self.provider.sequential(&ctx, &task)?;
                if m0.len() != n || m1.len() != n {
                    return Err(Error::Backend {
                        t,
                        fold: k,
                        msg: "regression output length differs from n".into(),
                    });
                }
                m0.into_iter().zip(m1).map(|(a, b)| [a, b]).collect()
            };
            let st = &steps[t - 1];
            target = match method {
                Method::Mr => (0..n).map(|i| plug_in(&st[i], &mt[i])).collect(),
                _ => (0..n)
                    .map(|i| {
                        let a = data.treatment(i, t) as usize;
                        debiased(&st[i], &mt[i]) + st[i].r * (target[i] - mt[i][a])
                    })
                    .collect(),
            };
            m[t - 1] = mt;
        }

        let path = |i: usize| -> (Vec<Step<f64>>, Vec<[f64; 2]>) {
            ((0..l).map(|t| steps[t][i]).collect(), (0..l).map(|t| m[t][i]).collect())
        };
        let (scores, influence) = match method {
            Method::Mr => {
                let m0 = members.iter().map(|&i| target[i]).sum::<f64>() / members.len() as f64;
                let infl: Vec<f64> = members
                    .iter()
                    .map(|&i| {
                        let (s, mm) = path(i);
                        let (pm, pq) = eif_parts(&s, &mm, &treat[i], terminal[i], m0);
                        pm + pq
                    })
                    .collect();
                (infl.iter().map(|v| m0 + v).collect(), infl)
            }
            _ => {
                debug_assert!(members.iter().all(|&i| {
                    let (s, mm) = path(i);
                    let direct = debiased_pseudo_outcome(1, &s, &mm, &treat[i], terminal[i]);
                    (direct - target[i]).abs() <= 1e-9 * (1.0 + direct.abs())
                }));
                (members.iter().map(|&i| target[i]).collect(), vec![0.0; members.len()])
            }
        };
        Ok(RotationOut { members, scores, influence, pi: self.pi[k][..l].to_vec(), steps, m })
    }
}

/// Runs one functional with a fresh cross-fitting plan.
pub fn estimate<P: NuisanceProvider>(
    data: &PanelDataset,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    functional: Functional,
    method: Method,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<Estimation> {
    CrossFit::new(data, provider, cfg)?.run(regime, weight, functional, method)
}

pub fn mr_estimate<P: NuisanceProvider>(
    data: &PanelDataset,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    Ok(estimate(data, regime, weight, Functional::Outcome, Method::Mr, provider, cfg)?.report)
}

pub fn sdr_estimate<P: NuisanceProvider>(
    data: &PanelDataset,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    Ok(estimate(data, regime, weight, Functional::Outcome, Method::Sdr, provider, cfg)?.report)
}

pub fn ipw_estimate<P: NuisanceProvider>(
    data: &PanelDataset,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    Ok(estimate(data, regime, weight, Functional::Outcome, Method::Ipw, provider, cfg)?.report)
}

pub fn treatment_mean_mr<P: NuisanceProvider>(
    data: &PanelDataset,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    t_star: usize,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    let f = Functional::TreatmentMean { t_star };
    Ok(estimate(data, regime, weight, f, Method::Mr, provider, cfg)?.report)
}

pub fn treatment_mean_sdr<P: NuisanceProvider>(
    data: &PanelDataset,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    t_star: usize,
    provider: &P,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    let f = Functional::TreatmentMean { t_star };
    Ok(estimate(data, regime, weight, f, Method::Sdr, provider, cfg)?.report)
}
