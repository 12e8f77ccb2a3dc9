//! Longitudinal panel data: trajectories, history features, folds.

mod io;
mod schema;

pub use io::{load_long_csv, read_long_csv, write_long_csv, write_wide_csv};
pub use schema::Schema;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// One subject's record `(X_1, A_1, ..., X_T, A_T, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub covariates: Vec<Vec<f64>>,
    pub treatments: Vec<u8>,
    pub outcome: f64,
}

impl Trajectory {
    pub fn new(covariates: Vec<Vec<f64>>, treatments: Vec<u8>, outcome: f64) -> Result<Self> {
        let tr = Trajectory { covariates, treatments, outcome };
        tr.validate()?;
        Ok(tr)
    }

    pub fn horizon(&self) -> usize {
        self.treatments.len()
    }

    fn validate(&self) -> Result<()> {
        if self.treatments.is_empty() {
            return Err(Error::InvalidPanel("trajectory with no timepoints".into()));
        }
        if self.covariates.len() != self.treatments.len() {
            return Err(Error::InvalidPanel(format!(
                "{} covariate blocks but {} treatments",
                self.covariates.len(),
                self.treatments.len()
            )));
        }
        if let Some(a) = self.treatments.iter().find(|&&a| a > 1) {
            return Err(Error::InvalidPanel(format!("treatment value {a} is not binary")));
        }
        if !self.outcome.is_finite() {
            return Err(Error::InvalidPanel(format!("non-finite outcome {}", self.outcome)));
        }
        if self.covariates.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPanel("non-finite covariate".into()));
        }
        Ok(())
    }
}

/// A validated sample of `n >= 2` trajectories sharing horizon and
/// per-timepoint covariate dimensions. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    ids: Vec<String>,
    trajectories: Vec<Trajectory>,
    horizon: usize,
    covariate_dims: Vec<usize>,
    covariate_names: Vec<Vec<String>>,
}

/// Features of `H_t` for one subject.
///
/// Layout is chronological: `X_1, A_1, X_2, A_2, ..., X_t`, so the history
/// at `t` is a prefix of the history at `t + 1` and the treatment `A_t` is
/// the slot that separates them.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryView {
    pub subject: usize,
    pub t: usize,
    pub features: Vec<f64>,
}

impl PanelDataset {
    /// Builds a dataset with generated ids `1..=n` and covariate names
    /// `x1, x2, ...` per timepoint.
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let ids = (1..=trajectories.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, trajectories, None)
    }

    pub fn with_ids(
        ids: Vec<String>,
        trajectories: Vec<Trajectory>,
        covariate_names: Option<Vec<Vec<String>>>,
    ) -> Result<Self> {
        if trajectories.len() < 2 {
            return Err(Error::InvalidPanel(format!(
                "need at least 2 subjects, got {}",
                trajectories.len()
            )));
        }
        if ids.len() != trajectories.len() {
            return Err(Error::InvalidPanel("id count differs from trajectory count".into()));
        }
        let first = &trajectories[0];
        let horizon = first.horizon();
        let covariate_dims: Vec<usize> = first.covariates.iter().map(Vec::len).collect();
        for (i, tr) in trajectories.iter().enumerate() {
            tr.validate()
                .map_err(|e| Error::InvalidPanel(format!("subject {}: {e}", ids[i])))?;
            if tr.horizon() != horizon {
                return Err(Error::InvalidPanel(format!(
                    "subject {} has T={} but subject {} has T={horizon}",
                    ids[i],
                    tr.horizon(),
                    ids[0]
                )));
            }
            for (t, x) in tr.covariates.iter().enumerate() {
                if x.len() != covariate_dims[t] {
                    return Err(Error::InvalidPanel(format!(
                        "subject {} has {} covariates at t={} (expected {})",
                        ids[i],
                        x.len(),
                        t + 1,
                        covariate_dims[t]
                    )));
                }
            }
        }
        let covariate_names = match covariate_names {
            Some(names) => {
                let ok = names.len() == horizon
                    && names.iter().zip(&covariate_dims).all(|(n, &d)| n.len() == d);
                if !ok {
                    return Err(Error::InvalidPanel(
                        "covariate names do not match covariate dimensions".into(),
                    ));
                }
                names
            }
            None => covariate_dims
                .iter()
                .map(|&d| (1..=d).map(|j| format!("x{j}")).collect())
                .collect(),
        };
        Ok(PanelDataset { ids, trajectories, horizon, covariate_dims, covariate_names })
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn covariate_dims(&self) -> &[usize] {
        &self.covariate_dims
    }

    pub fn covariate_names(&self) -> &[Vec<String>] {
        &self.covariate_names
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    /// `A_t` for subject `i`, with 1-based `t`.
    #[inline]
    pub fn treatment(&self, i: usize, t: usize) -> u8 {
        self.trajectories[i].treatments[t - 1]
    }

    #[inline]
    pub fn outcome(&self, i: usize) -> f64 {
        self.trajectories[i].outcome
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.trajectories.iter().map(|tr| tr.outcome).collect()
    }

    /// Length of the `H_t` feature vector.
    pub fn history_len(&self, t: usize) -> usize {
        self.covariate_dims[..t].iter().sum::<usize>() + t - 1
    }

    pub fn history(&self, i: usize, t: usize) -> Result<HistoryView> {
        if i >= self.n() {
            return Err(Error::Domain(format!("subject index {i} out of range")));
        }
        if t == 0 || t > self.horizon {
            return Err(Error::Domain(format!("timepoint {t} outside 1..={}", self.horizon)));
        }
        let mut features = Vec::with_capacity(self.history_len(t));
        self.push_history(i, t, &mut features);
        Ok(HistoryView { subject: i, t, features })
    }

    /// Appends `H_t` features of subject `i` to `out`; `t` must be valid.
    pub(crate) fn push_history(&self, i: usize, t: usize, out: &mut Vec<f64>) {
        let tr = &self.trajectories[i];
        for s in 0..t {
            out.extend_from_slice(&tr.covariates[s]);
            if s + 1 < t {
                out.push(f64::from(tr.treatments[s]));
            }
        }
    }

    /// Copy of the dataset with outcomes replaced.
    pub fn with_outcomes(&self, outcomes: &[f64]) -> Result<Self> {
        if outcomes.len() != self.n() {
            return Err(Error::InvalidPanel("outcome vector length differs from n".into()));
        }
        let mut out = self.clone();
        for (tr, &y) in out.trajectories.iter_mut().zip(outcomes) {
            if !y.is_finite() {
                return Err(Error::InvalidPanel(format!("non-finite outcome {y}")));
            }
            tr.outcome = y;
        }
        Ok(out)
    }
}

/// Seeded partition of `0..n` into `K` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    labels: Vec<usize>,
    k: usize,
    seed: u64,
}

/// Random permutation dealt round-robin into `k` folds, so fold sizes differ
/// by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds requested for {n} observations")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, &[0xF01D, n as u64, k as u64]);
    order.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % k;
    }
    Ok(FoldAssignment { labels, k, seed })
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn fold_of(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == fold).collect()
    }

    /// Indices outside `fold`: the training set for that rotation.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}
