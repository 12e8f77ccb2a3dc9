//! Nuisances of the simulation design corrupted at prescribed rates.
//!
//! Every perturbation is `n^{-α} e(G)` with the error shapes of
//! [`NoiseShape`]. Each observation owns nine
//! standard normal draws, one per nuisance value the estimators can ask for:
//! `π_1(H_1)`, `π_2` at both values of `a_1`, `m_2(b)` at both values of
//! `a_1`, and `m_1(b)`. Counterfactual histories therefore reuse the same
//! draw wherever they appear. The regression at `t = 1` is corrupted around
//! its target under the *corrupted* intervention at `t = 2`: the plug-in
//! regression for MR, the regression of the debiased pseudo-outcome for SDR.

use rand_distr::{Distribution, StandardNormal};

use super::dgp::{Dgp, SimData};
use crate::error::{Error, Result};
use crate::estimators::kernel::{debiased, plug_in, step};
use crate::nuisance::{corrupt, FitContext, Functional, NoiseShape, NuisanceProvider, SeqTask};
use crate::rng;
use crate::stats;

/// Rates and clipping of the corruption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub alpha_pi: f64,
    pub alpha_m: f64,
    pub shape: NoiseShape,
    /// Corrupted propensities are clipped into this interval.
    pub pi_bounds: (f64, f64),
}

impl NoiseSpec {
    pub fn new(alpha_pi: f64, alpha_m: f64) -> Result<Self> {
        for a in [alpha_pi, alpha_m] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("rate exponent {a} outside (0, 1]")));
            }
        }
        Ok(NoiseSpec { alpha_pi, alpha_m, shape: NoiseShape::Centered, pi_bounds: (0.001, 0.999) })
    }
}

#[derive(Debug, Clone, Copy)]
struct Draws {
    pi1: f64,
    pi2: [f64; 2],
    m2: [[f64; 2]; 2],
    m1: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct CorruptedDgpNuisance {
    dgp: Dgp,
    spec: NoiseSpec,
    n: usize,
    x1: Vec<f64>,
    a1: Vec<u8>,
    draws: Vec<Draws>,
}

impl CorruptedDgpNuisance {
    pub fn new(dgp: Dgp, sim: &SimData, spec: NoiseSpec, seed: u64) -> Result<Self> {
        let data = &sim.data;
        if data.horizon() != 2 {
            return Err(Error::Config("the simulation design has two timepoints".into()));
        }
        let n = data.n();
        let draws = (0..n)
            .map(|i| {
                let mut r = rng::stream(seed, &[0xC0, i as u64]);
                let mut g = || -> f64 { StandardNormal.sample(&mut r) };
                Draws {
                    pi1: g(),
                    pi2: [g(), g()],
                    m2: [[g(), g()], [g(), g()]],
                    m1: [g(), g()],
                }
            })
            .collect();
        Ok(CorruptedDgpNuisance {
            dgp,
            spec,
            n,
            x1: (0..n).map(|i| data.trajectory(i).covariates[0][0]).collect(),
            a1: (0..n).map(|i| data.treatment(i, 1)).collect(),
            draws,
        })
    }

    fn pi_hat(&self, i: usize, t: usize, a1: u8) -> f64 {
        let s = &self.spec;
        let x1 = self.x1[i];
        let (u, g) = if t == 1 {
            (x1, self.draws[i].pi1)
        } else {
            (Dgp::x2(x1, a1), self.draws[i].pi2[a1 as usize])
        };
        corrupt(self.dgp.propensity(u), self.n, s.alpha_pi, s.shape, g, Some(s.pi_bounds))
    }

    /// `m_2(b)` at history `(x1, a1)`: true and corrupted.
    fn m2(&self, i: usize, a1: u8, functional: Functional) -> ([f64; 2], [f64; 2]) {
        match functional {
            Functional::Outcome => {
                let x1 = self.x1[i];
                let truth = [Dgp::outcome_mean(x1, a1, 0), Dgp::outcome_mean(x1, a1, 1)];
                let g = self.draws[i].m2[a1 as usize];
                let noisy = [0, 1].map(|b| corrupt(truth[b], self.n, self.spec.alpha_m, self.spec.shape, g[b], None));
                (truth, noisy)
            }
            // pinned at t* = 2
            Functional::TreatmentMean { .. } => ([0.0, 1.0], [0.0, 1.0]),
        }
    }

    /// Target of the `t = 1` regression at `A_1 = a1`.
    fn m1_target(&self, i: usize, a1: u8, task: &SeqTask) -> Result<f64> {
        let a_t = task.regime.at(2);
        let pi_hat = self.pi_hat(i, 2, a1);
        let (truth, noisy) = self.m2(i, a1, task.functional);
        if !task.debiased {
            return Ok(plug_in(&step(a_t, 0, pi_hat, task.weight)?, &truth));
        }
        // E over A_2 ~ π_2 of V̂_2 + r̂_2 (E[terminal | A_2] - m̂_2(A_2))
        let pi_true = self.dgp.propensity(Dgp::x2(self.x1[i], a1));
        let mut v = 0.0;
        for a2 in 0..=1u8 {
            let p = if a2 == 1 { pi_true } else { 1.0 - pi_true };
            if p == 0.0 {
                continue;
            }
            let st = step(a_t, a2, pi_hat, task.weight)?;
            let k = a2 as usize;
            v += p * (debiased(&st, &noisy) + st.r * (truth[k] - noisy[k]));
        }
        Ok(v)
    }

    /// Root mean squared perturbation of the propensities and regressions
    /// at the observed histories, before clipping.
    pub fn corruption_rmse(&self) -> (f64, f64) {
        let s = &self.spec;
        let nf = self.n as f64;
        let scale = |alpha: f64, g: &[f64]| -> f64 {
            let e: Vec<f64> = g.iter().map(|&x| s.shape.error(x)).collect();
            nf.powf(-alpha) * stats::mean_sq(&e).sqrt()
        };
        let mut gp = Vec::with_capacity(2 * self.n);
        let mut gm = Vec::with_capacity(4 * self.n);
        for (i, d) in self.draws.iter().enumerate() {
            let a1 = self.a1[i] as usize;
            gp.push(d.pi1);
            gp.push(d.pi2[a1]);
            gm.extend_from_slice(&d.m2[a1]);
            gm.extend_from_slice(&d.m1);
        }
        (scale(s.alpha_pi, &gp), scale(s.alpha_m, &gm))
    }

    fn check_rows(&self, ctx: &FitContext) -> Result<()> {
        if ctx.data.n() != self.n {
            return Err(Error::Config("provider built for a different dataset".into()));
        }
        Ok(())
    }
}

impl NuisanceProvider for CorruptedDgpNuisance {
    fn propensity(&self, ctx: &FitContext, t: usize) -> Result<Vec<f64>> {
        self.check_rows(ctx)?;
        Ok((0..self.n).map(|i| self.pi_hat(i, t, self.a1[i])).collect())
    }

    fn sequential(&self, ctx: &FitContext, task: &SeqTask) -> Result<[Vec<f64>; 2]> {
        self.check_rows(ctx)?;
        let mut out = [Vec::with_capacity(self.n), Vec::with_capacity(self.n)];
        for i in 0..self.n {
            let m = if task.t == 2 {
                self.m2(i, self.a1[i], task.functional).1
            } else {
                let g = self.draws[i].m1;
                let mut m = [0.0; 2];
                for b in 0..=1u8 {
                    let target = self.m1_target(i, b, task)?;
                    m[b as usize] = corrupt(target, self.n, self.spec.alpha_m, self.spec.shape, g[b as usize], None);
                }
                m
            };
            out[0].push(m[0]);
            out[1].push(m[1]);
        }
        Ok(out)
    }
}
