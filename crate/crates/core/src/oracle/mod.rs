//! Finite-state worlds with exact enumeration of intervention means.
//!
//! A [`DiscreteWorld`] has one scalar covariate per timepoint drawn from a
//! finite support. Histories are encoded in mixed radix over
//! `(x_1, a_1, x_2, a_2, ...)` with `x_1` most significant:
//!
//! * `H_1` index = index of `x_1` in its support;
//! * `(H_t, a_t)` index = `2 · idx(H_t) + a_t`;
//! * `H_{t+1}` index = `|X_{t+1}| · idx(H_t, a_t) + idx(x_{t+1})`.
//!
//! Tables are laid out in that order: `transitions[t-2]` has one row per
//! `(H_{t-1}, A_{t-1})`, `propensity[t-1]` one entry per `H_t`, and the
//! outcome mean one entry per `(H_T, A_T)`.

mod bundled;
mod checks;
mod enumerate;
mod file;
mod provider;
mod simulate;

pub use bundled::{bundled, bundled_names};
pub use checks::{
    exact_flip_effect, exact_wate_single, ipw_form_psi, sharp_null_certify, static_g_formula,
    SharpNull, WateCheck,
};
pub use enumerate::{exact_psi, exact_psi_forward, exact_treatment_mean, sequential_tables};
pub use file::WorldSpec;
pub use provider::WorldNuisance;
pub use simulate::{enumerate_observational, sample_observational, simulate_flip, FlipDraws, FlipMode};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::weights::{FlipWeight, SmoothWeight};

/// A covariate/treatment history as values.
#[derive(Debug, Clone, PartialEq)]
pub struct History<F> {
    pub x: Vec<F>,
    pub a: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld<F> {
    supports: Vec<Vec<F>>,
    p_x1: Vec<F>,
    transitions: Vec<Vec<Vec<F>>>,
    propensity: Vec<Vec<F>>,
    outcome_mean: Vec<F>,
    outcome_sd: F,
}

fn row_tolerance<F: Scalar>() -> F {
    F::lit(1e-12).max(F::epsilon() * F::lit(64.0))
}

impl<F: Scalar> DiscreteWorld<F> {
    pub fn new(
        supports: Vec<Vec<F>>,
        p_x1: Vec<F>,
        transitions: Vec<Vec<Vec<F>>>,
        propensity: Vec<Vec<F>>,
        outcome_mean: Vec<F>,
        outcome_sd: F,
    ) -> Result<Self> {
        let w = DiscreteWorld { supports, p_x1, transitions, propensity, outcome_mean, outcome_sd };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let t_max = self.supports.len();
        let bad = |m: String| Err(Error::Config(format!("world: {m}")));
        if t_max == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.supports.iter().any(Vec::is_empty) {
            return bad("empty covariate support".into());
        }
        let check_row = |row: &[F], what: &str| -> Result<()> {
            if row.iter().any(|&p| !(p >= F::zero() && p <= F::one())) {
                return Err(Error::Config(format!("world: {what} has an entry outside [0,1]")));
            }
            let sum: F = row.iter().copied().sum();
            if (sum - F::one()).abs() > row_tolerance::<F>() {
                return Err(Error::Config(format!("world: {what} sums to {sum}")));
            }
            Ok(())
        };
        if self.p_x1.len() != self.supports[0].len() {
            return bad("P(X_1) length differs from the support".into());
        }
        check_row(&self.p_x1, "P(X_1)")?;
        if self.transitions.len() != t_max - 1 {
            return bad(format!("expected {} transition tables", t_max - 1));
        }
        for t in 2..=t_max {
            let table = &self.transitions[t - 2];
            if table.len() != 2 * self.n_hist(t - 1) {
                return bad(format!("transition table for t={t} needs {} rows", 2 * self.n_hist(t - 1)));
            }
            for (r, row) in table.iter().enumerate() {
                if row.len() != self.supports[t - 1].len() {
                    return bad(format!("transition row {r} for t={t} has wrong length"));
                }
                check_row(row, &format!("transition row {r} for t={t}"))?;
            }
        }
        if self.propensity.len() != t_max {
            return bad(format!("expected {t_max} propensity tables"));
        }
        for t in 1..=t_max {
            if self.propensity[t - 1].len() != self.n_hist(t) {
                return bad(format!("propensity table for t={t} needs {} entries", self.n_hist(t)));
            }
            if self.propensity[t - 1].iter().any(|&p| !(p >= F::zero() && p <= F::one())) {
                return bad(format!("propensity at t={t} outside [0,1]"));
            }
        }
        if self.outcome_mean.len() != 2 * self.n_hist(t_max) {
            return bad(format!("outcome table needs {} entries", 2 * self.n_hist(t_max)));
        }
        if self.outcome_mean.iter().any(|v| !v.is_finite()) {
            return bad("non-finite outcome mean".into());
        }
        if !(self.outcome_sd >= F::zero()) {
            return bad("negative outcome sd".into());
        }
        Ok(())
    }

    /// Builds a world from functions of the history.
    ///
    /// `transition(t, h, a)` is the row `P(X_t | H_{t-1} = h, A_{t-1} = a)`
    /// for `t >= 2`, `propensity(h)` is `P(A_t = 1 | H_t = h)` with
    /// `t = h.x.len()`, and `outcome(h, a)` is `E[Y | H_T = h, A_T = a]`.
    pub fn from_fns(
        supports: Vec<Vec<F>>,
        p_x1: Vec<F>,
        transition: impl Fn(usize, &History<F>, u8) -> Vec<F>,
        propensity: impl Fn(&History<F>) -> F,
        outcome: impl Fn(&History<F>, u8) -> F,
        outcome_sd: F,
    ) -> Result<Self> {
        let mut shell = DiscreteWorld {
            supports,
            p_x1,
            transitions: Vec::new(),
            propensity: Vec::new(),
            outcome_mean: Vec::new(),
            outcome_sd,
        };
        let t_max = shell.horizon();
        for t in 1..=t_max {
            let hs: Vec<History<F>> = (0..shell.n_hist(t)).map(|h| shell.decode(t, h)).collect();
            shell.propensity.push(hs.iter().map(&propensity).collect());
            if t < t_max {
                let mut rows = Vec::with_capacity(2 * hs.len());
                for h in &hs {
                    for a in 0..=1 {
                        rows.push(transition(t + 1, h, a));
                    }
                }
                shell.transitions.push(rows);
            } else {
                for h in &hs {
                    for a in 0..=1 {
                        shell.outcome_mean.push(outcome(h, a));
                    }
                }
            }
        }
        shell.validate()?;
        Ok(shell)
    }

    pub fn horizon(&self) -> usize {
        self.supports.len()
    }

    pub fn support(&self, t: usize) -> &[F] {
        &self.supports[t - 1]
    }

    pub fn p_x1(&self) -> &[F] {
        &self.p_x1
    }

    pub fn outcome_sd(&self) -> F {
        self.outcome_sd
    }

    /// Number of distinct `H_t`.
    pub fn n_hist(&self, t: usize) -> usize {
        let mut n = self.supports[0].len();
        for s in 2..=t {
            n = n * 2 * self.supports[s - 1].len();
        }
        n
    }

    /// Number of `(x̄_T, ā_T)` configurations.
    pub fn state_count(&self) -> usize {
        2 * self.n_hist(self.horizon())
    }

    #[inline]
    pub fn propensity(&self, t: usize, h: usize) -> F {
        self.propensity[t - 1][h]
    }

    /// Row `P(X_{t} | H_{t-1}, A_{t-1})` for `t >= 2`, indexed by `(H_{t-1}, a)`.
    #[inline]
    pub fn transition(&self, t: usize, ha: usize) -> &[F] {
        &self.transitions[t - 2][ha]
    }

    #[inline]
    pub fn outcome_mean(&self, ha: usize) -> F {
        self.outcome_mean[ha]
    }

    #[inline]
    pub fn child(&self, t: usize, h: usize, a: u8, x_idx: usize) -> usize {
        (2 * h + a as usize) * self.supports[t].len() + x_idx
    }

    /// Decodes an `H_t` index into values.
    pub fn decode(&self, t: usize, mut h: usize) -> History<F> {
        let mut x = vec![F::zero(); t];
        let mut a = vec![0u8; t - 1];
        for s in (1..=t).rev() {
            let k = self.supports[s - 1].len();
            x[s - 1] = self.supports[s - 1][h % k];
            h /= k;
            if s > 1 {
                a[s - 2] = (h % 2) as u8;
                h /= 2;
            }
        }
        History { x, a }
    }

    pub fn describe(&self, t: usize, h: usize) -> String {
        let hist = self.decode(t, h);
        let mut parts = Vec::new();
        for s in 0..t {
            parts.push(format!("x{}={}", s + 1, hist.x[s]));
            if s + 1 < t {
                parts.push(format!("a{}={}", s + 1, hist.a[s]));
            }
        }
        parts.join(",")
    }

    /// Index of `H_t` for covariate values and treatments, matching values
    /// exactly against the supports.
    pub fn encode(&self, x: &[F], a: &[u8]) -> Option<usize> {
        let t = x.len();
        let mut h = 0usize;
        for s in 1..=t {
            let xi = self.supports[s - 1].iter().position(|&v| v == x[s - 1])?;
            if s == 1 {
                h = xi;
            } else {
                h = self.child(s - 1, h, *a.get(s - 2)?, xi);
            }
        }
        Some(h)
    }

    /// `[Q_t(0 | h), Q_t(1 | h)]` for target `a_t`.
    pub fn intervention(&self, t: usize, h: usize, a_t: u8, weight: &dyn FlipWeight<F>) -> [F; 2] {
        let pi1 = self.propensity(t, h);
        let p = if a_t == 1 { pi1 } else { F::one() - pi1 };
        let q_target = (p + weight.eval(p) * (F::one() - p)).min(F::one());
        let q_other = (F::one() - q_target).max(F::zero());
        if a_t == 1 {
            [q_other, q_target]
        } else {
            [q_target, q_other]
        }
    }

    /// Same world with the outcome table shifted by `c`.
    pub fn shift_outcome(&self, c: F) -> Self {
        let mut w = self.clone();
        for v in &mut w.outcome_mean {
            *v = *v + c;
        }
        w
    }

    pub fn map_scalar<G: Scalar>(&self) -> DiscreteWorld<G> {
        let cv = |v: &F| G::lit(v.to_f64_lossy());
        DiscreteWorld {
            supports: self.supports.iter().map(|r| r.iter().map(cv).collect()).collect(),
            p_x1: self.p_x1.iter().map(cv).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|tab| tab.iter().map(|r| r.iter().map(cv).collect()).collect())
                .collect(),
            propensity: self.propensity.iter().map(|r| r.iter().map(cv).collect()).collect(),
            outcome_mean: self.outcome_mean.iter().map(cv).collect(),
            outcome_sd: cv(&self.outcome_sd),
        }
    }
}

/// Weights accepted by the oracle, including the non-smooth ones that the
/// estimators do not support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleWeight<F> {
    Smooth(SmoothWeight<F>),
    /// `1{p >= ε}`.
    HardTrim { eps: F },
    /// `min(p, 1 - p)`.
    Matching,
}

impl<F: Scalar> FlipWeight<F> for OracleWeight<F> {
    fn eval(&self, p: F) -> F {
        match self {
            OracleWeight::Smooth(s) => s.eval(p),
            OracleWeight::HardTrim { eps } => {
                if p >= *eps {
                    F::one()
                } else {
                    F::zero()
                }
            }
            OracleWeight::Matching => p.min(F::one() - p),
        }
    }

    fn vanishes_at_zero(&self) -> bool {
        match self {
            OracleWeight::Smooth(s) => s.vanishes_at_zero(),
            OracleWeight::HardTrim { eps } => *eps > F::zero(),
            OracleWeight::Matching => true,
        }
    }

    fn label(&self) -> String {
        match self {
            OracleWeight::Smooth(s) => s.to_string(),
            OracleWeight::HardTrim { eps } => format!("hard-trim:{eps}"),
            OracleWeight::Matching => "matching".into(),
        }
    }
}

impl<F: Scalar> From<SmoothWeight<F>> for OracleWeight<F> {
    fn from(s: SmoothWeight<F>) -> Self {
        OracleWeight::Smooth(s)
    }
}
