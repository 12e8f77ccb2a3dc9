//! Nuisance estimation: propensities `π_t` and sequential regressions `m_t`.
//!
//! Estimators talk to a [`NuisanceProvider`], which answers two questions
//! for one cross-fitting rotation: the propensity `P(A_t = 1 | H_t)` for
//! every observation, and the regression of a pseudo-outcome on
//! `(A_t, H_t)` evaluated at `A_t = 0` and `A_t = 1` for every
//! observation. [`LearnedNuisance`] fits the built-in backends on the
//! rotation's training folds; exact and corrupted-truth providers live in
//! `oracle` and `simharness`.

mod learners;
mod oracle_noise;

pub use learners::{Backend, Design, Model, Response};
pub use oracle_noise::{corrupt, noise_draws, oracle_noise_nuisance, NoiseShape};

use crate::error::{Error, Result};
use crate::panel::{FoldAssignment, PanelDataset};
use crate::weights::{SmoothWeight, TargetRegime};

/// Which mean the sequential regressions build towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// `E[Y(D(ā))]`.
    Outcome,
    /// `E[D_{t*}(a_{t*})]`: the probability of treatment at `t*` under the
    /// intervention.
    TreatmentMean { t_star: usize },
}

impl Functional {
    /// Last timepoint that enters the functional.
    pub fn last(&self, horizon: usize) -> usize {
        match *self {
            Functional::Outcome => horizon,
            Functional::TreatmentMean { t_star } => t_star,
        }
    }
}

/// One cross-fitting rotation: models are trained on `train` and predict
/// for every observation of `data`.
pub struct FitContext<'a> {
    pub data: &'a PanelDataset,
    pub train: &'a [usize],
    pub rotation: usize,
}

/// A sequential-regression request at timepoint `t`.
pub struct SeqTask<'a> {
    pub t: usize,
    pub regime: &'a TargetRegime,
    pub weight: &'a SmoothWeight<f64>,
    pub functional: Functional,
    /// `true` when the target is the debiased pseudo-outcome.
    pub debiased: bool,
    /// Pseudo-outcome for every observation; only training rows are fit.
    pub target: &'a [f64],
}

pub trait NuisanceProvider: Sync {
    /// `P(A_t = 1 | H_t)` for every observation.
    fn propensity(&self, ctx: &FitContext, t: usize) -> Result<Vec<f64>>;

    /// `(m_t(0, H_t), m_t(1, H_t))` for every observation.
    fn sequential(&self, ctx: &FitContext, task: &SeqTask) -> Result<[Vec<f64>; 2]>;
}

/// Fits the built-in backends on the training folds of each rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnedNuisance {
    pub propensity_backend: Backend,
    pub regression_backend: Backend,
}

impl LearnedNuisance {
    pub fn new(backend: Backend) -> Self {
        LearnedNuisance { propensity_backend: backend, regression_backend: backend }
    }
}

/// Design of `H_t` features for the given rows.
pub fn history_design(data: &PanelDataset, t: usize, rows: &[usize]) -> Design {
    let cols = data.history_len(t);
    let mut buf = Vec::with_capacity(rows.len() * cols);
    for &i in rows {
        data.push_history(i, t, &mut buf);
    }
    Design::new(rows.len(), cols, buf)
}

/// Design of `(A_t, H_t)` features; `force` overrides the treatment column.
pub fn treatment_history_design(
    data: &PanelDataset,
    t: usize,
    rows: &[usize],
    force: Option<u8>,
) -> Design {
    let cols = data.history_len(t) + 1;
    let mut buf = Vec::with_capacity(rows.len() * cols);
    for &i in rows {
        buf.push(f64::from(force.unwrap_or_else(|| data.treatment(i, t))));
        data.push_history(i, t, &mut buf);
    }
    Design::new(rows.len(), cols, buf)
}

fn all_rows(data: &PanelDataset) -> Vec<usize> {
    (0..data.n()).collect()
}

fn backend_err(t: usize, fold: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(msg) => Error::Backend { t, fold, msg },
        other => other,
    }
}

impl NuisanceProvider for LearnedNuisance {
    fn propensity(&self, ctx: &FitContext, t: usize) -> Result<Vec<f64>> {
        let data = ctx.data;
        let x = history_design(data, t, ctx.train);
        let y: Vec<f64> = ctx.train.iter().map(|&i| f64::from(data.treatment(i, t))).collect();
        let model = self
            .propensity_backend
            .fit(&x, &y, Response::Binary)
            .map_err(backend_err(t, ctx.rotation))?;
        let pred = model.predict_all(&history_design(data, t, &all_rows(data)));
        check_finite(&pred, t, ctx.rotation)?;
        Ok(pred.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    fn sequential(&self, ctx: &FitContext, task: &SeqTask) -> Result<[Vec<f64>; 2]> {
        let data = ctx.data;
        let t = task.t;
        let x = treatment_history_design(data, t, ctx.train, None);
        let y: Vec<f64> = ctx.train.iter().map(|&i| task.target[i]).collect();
        let model = self
            .regression_backend
            .fit(&x, &y, Response::Real)
            .map_err(backend_err(t, ctx.rotation))?;
        let (lo, hi) = expanded_range(&y);
        let rows = all_rows(data);
        let mut out = [Vec::new(), Vec::new()];
        for b in 0..=1u8 {
            let pred = model.predict_all(&treatment_history_design(data, t, &rows, Some(b)));
            check_finite(&pred, t, ctx.rotation)?;
            out[b as usize] = pred.into_iter().map(|v| v.clamp(lo, hi)).collect();
        }
        Ok(out)
    }
}

/// Observed range widened by 10% on each side.
fn expanded_range(y: &[f64]) -> (f64, f64) {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo);
    (lo - pad, hi + pad)
}

fn check_finite(pred: &[f64], t: usize, fold: usize) -> Result<()> {
    if pred.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Backend { t, fold, msg: "non-finite prediction".into() })
    }
}

/// Predictions of `K` rotation models for every observation.
#[derive(Debug, Clone)]
pub struct CrossFitted {
    folds: FoldAssignment,
    rotations: Vec<Vec<f64>>,
}

impl CrossFitted {
    pub fn new(folds: FoldAssignment, rotations: Vec<Vec<f64>>) -> Self {
        assert_eq!(folds.k(), rotations.len());
        CrossFitted { folds, rotations }
    }

    /// Predictions of the model trained without `fold`.
    pub fn rotation(&self, fold: usize) -> &[f64] {
        &self.rotations[fold]
    }

    /// Each observation's prediction from the model that did not see it.
    pub fn held_out(&self) -> Vec<f64> {
        (0..self.folds.n()).map(|i| self.rotations[self.folds.fold_of(i)][i]).collect()
    }

    /// Folds whose data trained the model behind `held_out()[i]`.
    pub fn training_folds(&self, i: usize) -> Vec<usize> {
        let own = self.folds.fold_of(i);
        (0..self.folds.k()).filter(|&f| f != own).collect()
    }
}

pub fn clip_probability(p: f64, clip: f64) -> f64 {
    p.clamp(clip, 1.0 - clip)
}

fn check_clip(clip: f64) -> Result<()> {
    if (0.0..=0.1).contains(&clip) {
        Ok(())
    } else {
        Err(Error::Config(format!("clip {clip} outside [0, 0.1]")))
    }
}

/// Cross-fitted `π̂_t` for `t = 1..=T`, clipped into `[clip, 1 - clip]`.
pub fn fit_propensities(
    data: &PanelDataset,
    folds: &FoldAssignment,
    backend: Backend,
    clip: f64,
) -> Result<Vec<CrossFitted>> {
    check_clip(clip)?;
    let provider = LearnedNuisance::new(backend);
    (1..=data.horizon())
        .map(|t| {
            let rotations = (0..folds.k())
                .map(|k| {
                    let train = folds.complement(k);
                    let ctx = FitContext { data, train: &train, rotation: k };
                    let p = provider.propensity(&ctx, t)?;
                    Ok(p.into_iter().map(|v| clip_probability(v, clip)).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CrossFitted::new(folds.clone(), rotations))
        })
        .collect()
}

/// Cross-fitted regression of `pseudo` on `(A_t, H_t)`, returned as the
/// predictions at `A_t = 0` and `A_t = 1`.
pub fn fit_sequential_regression(
    pseudo: &[f64],
    t: usize,
    data: &PanelDataset,
    folds: &FoldAssignment,
    backend: Backend,
) -> Result<[CrossFitted; 2]> {
    if pseudo.len() != data.n() {
        return Err(Error::Config("pseudo-outcome length differs from n".into()));
    }
    if pseudo.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite pseudo-outcome".into()));
    }
    if t == 0 || t > data.horizon() {
        return Err(Error::Domain(format!("timepoint {t} outside 1..={}", data.horizon())));
    }
    let provider = LearnedNuisance::new(backend);
    let regime = TargetRegime::constant(1, data.horizon())?;
    let weight = SmoothWeight::ConstantOne;
    let mut zero = Vec::new();
    let mut one = Vec::new();
    for k in 0..folds.k() {
        let train = folds.complement(k);
        let ctx = FitContext { data, train: &train, rotation: k };
        let task = SeqTask {
            t,
            regime: &regime,
            weight: &weight,
            functional: Functional::Outcome,
            debiased: false,
            target: pseudo,
        };
        let [m0, m1] = provider.sequential(&ctx, &task)?;
        zero.push(m0);
        one.push(m1);
    }
    Ok([CrossFitted::new(folds.clone(), zero), CrossFitted::new(folds.clone(), one)])
}

/// Nuisance values each observation's score was built from, taken from the
/// rotation in which the observation was held out. Indexed `[t-1][i]`.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub pi_hat: Vec<Vec<f64>>,
    pub q_hat: Vec<Vec<[f64; 2]>>,
    pub r_hat: Vec<Vec<f64>>,
    pub m_hat: Vec<Vec<[f64; 2]>>,
    /// Rotation whose models produced observation `i`'s values.
    pub provenance: Vec<usize>,
    pub folds: FoldAssignment,
}

impl NuisanceSet {
    /// Folds used to train the models behind observation `i`'s values.
    pub fn training_folds(&self, i: usize) -> Vec<usize> {
        (0..self.folds.k()).filter(|&f| f != self.provenance[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{assign_folds, Trajectory};

    fn toy(n: usize) -> PanelDataset {
        let trs = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                Trajectory::new(vec![vec![x]], vec![(i % 2) as u8], 2.0 * x).unwrap()
            })
            .collect();
        PanelDataset::new(trs).unwrap()
    }

    #[test]
    fn constant_treatment_clips() {
        let trs = (0..20)
            .map(|i| Trajectory::new(vec![vec![i as f64]], vec![1], 0.0).unwrap())
            .collect();
        let data = PanelDataset::new(trs).unwrap();
        let folds = assign_folds(20, 2, 1).unwrap();
        for b in [Backend::Linear, Backend::Logistic, Backend::Tree { depth: 2 }] {
            let fits = fit_propensities(&data, &folds, b, 0.01).unwrap();
            assert!(fits[0].held_out().iter().all(|&p| p == 0.99), "{b}");
        }
    }

    #[test]
    fn held_out_provenance() {
        let data = toy(10);
        let folds = assign_folds(10, 2, 4).unwrap();
        let fits = fit_propensities(&data, &folds, Backend::Linear, 0.01).unwrap();
        for i in 0..10 {
            assert!(!fits[0].training_folds(i).contains(&folds.fold_of(i)));
        }
    }

    #[test]
    fn constant_pseudo_gives_constant_regression() {
        let data = toy(30);
        let folds = assign_folds(30, 3, 2).unwrap();
        let [m0, m1] =
            fit_sequential_regression(&[3.5; 30], 1, &data, &folds, Backend::Linear).unwrap();
        for v in m0.held_out().into_iter().chain(m1.held_out()) {
            assert!((v - 3.5).abs() < 1e-9);
        }
    }

    #[test]
    fn clip_range_checked() {
        let data = toy(10);
        let folds = assign_folds(10, 2, 4).unwrap();
        assert!(fit_propensities(&data, &folds, Backend::Linear, 0.2).is_err());
    }
}
