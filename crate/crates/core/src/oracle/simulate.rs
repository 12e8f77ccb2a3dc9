use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::DiscreteWorld;
use crate::error::{Error, Result};
use crate::panel::{PanelDataset, Trajectory};
use crate::rng::{self, StreamRng};
use crate::weights::{FlipWeight, TargetRegime};

fn categorical(r: &mut StreamRng, probs: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = k;
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// How a flip is decided when the natural treatment is off target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipMode {
    /// Draw the natural treatment at the post-intervention history; keep it
    /// if on target, otherwise flip with probability `f`.
    Natural,
    /// Draw the intervened treatment directly from `Q_t`, without reference
    /// to the natural value.
    Stochastic,
}

/// Draws from the world under a flip intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipDraws {
    pub y: Vec<f64>,
    /// Intervened treatments `D_1..D_T`, one row per draw.
    pub d: Vec<Vec<u8>>,
}

/// Observational sample of size `n`; draw `i` uses its own seeded stream.
pub fn sample_observational(world: &DiscreteWorld<f64>, n: usize, seed: u64) -> Result<PanelDataset> {
    let t_max = world.horizon();
    let trs: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[0x0B5, i as u64]);
            let mut h = categorical(&mut r, world.p_x1());
            let mut xs = vec![vec![world.support(1)[h]]];
            let mut as_ = Vec::with_capacity(t_max);
            for t in 1..=t_max {
                let a = u8::from(r.random::<f64>() < world.propensity(t, h));
                as_.push(a);
                if t < t_max {
                    let xi = categorical(&mut r, world.transition(t + 1, 2 * h + a as usize));
                    xs.push(vec![world.support(t + 1)[xi]]);
                    h = world.child(t, h, a, xi);
                } else {
                    let g: f64 = StandardNormal.sample(&mut r);
                    let y = world.outcome_mean(2 * h + a as usize) + world.outcome_sd() * g;
                    return Trajectory { covariates: xs, treatments: as_, outcome: y };
                }
            }
            unreachable!("loop returns at t = T")
        })
        .collect();
    PanelDataset::new(trs)
}

/// Simulates the intervention mechanism itself, `n` draws.
pub fn simulate_flip(
    world: &DiscreteWorld<f64>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<f64>,
    n: usize,
    seed: u64,
    mode: FlipMode,
) -> Result<FlipDraws> {
    let t_max = world.horizon();
    if regime.horizon() != t_max {
        return Err(Error::Config(format!("regime {regime} does not match T={t_max}")));
    }
    let draws: Vec<(f64, Vec<u8>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[0xF11, i as u64]);
            let mut h = categorical(&mut r, world.p_x1());
            let mut d = Vec::with_capacity(t_max);
            for t in 1..=t_max {
                let a_t = regime.at(t);
                let pi1 = world.propensity(t, h);
                let p = if a_t == 1 { pi1 } else { 1.0 - pi1 };
                let f = weight.eval(p);
                let dt = match mode {
                    FlipMode::Natural => {
                        let natural = u8::from(r.random::<f64>() < pi1);
                        let v: f64 = r.random();
                        if natural == a_t || v > f {
                            natural
                        } else {
                            a_t
                        }
                    }
                    FlipMode::Stochastic => {
                        let q_target = p + f * (1.0 - p);
                        let v: f64 = r.random();
                        if v < q_target {
                            a_t
                        } else {
                            1 - a_t
                        }
                    }
                };
                d.push(dt);
                if t < t_max {
                    let xi = categorical(&mut r, world.transition(t + 1, 2 * h + dt as usize));
                    h = world.child(t, h, dt, xi);
                } else {
                    let g: f64 = StandardNormal.sample(&mut r);
                    let y = world.outcome_mean(2 * h + dt as usize) + world.outcome_sd() * g;
                    return (y, d);
                }
            }
            unreachable!("loop returns at t = T")
        })
        .collect();
    let (y, d) = draws.into_iter().unzip();
    Ok(FlipDraws { y, d })
}

/// Every observational trajectory with positive probability, with
/// `Y = E[Y | H_T, A_T]`, and the trajectory probabilities.
pub fn enumerate_observational(world: &DiscreteWorld<f64>) -> Result<(PanelDataset, Vec<f64>)> {
    let t_max = world.horizon();
    let mut trs = Vec::new();
    let mut probs = Vec::new();
    // (t, h, prob, xs, as)
    let mut stack: Vec<(usize, usize, f64, Vec<f64>, Vec<u8>)> = world
        .p_x1()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(h, &p)| (1, h, p, vec![world.support(1)[h]], Vec::new()))
        .collect();
    stack.reverse();
    while let Some((t, h, prob, xs, as_)) = stack.pop() {
        let pi1 = world.propensity(t, h);
        for a in 0..=1u8 {
            let pa = if a == 1 { pi1 } else { 1.0 - pi1 };
            if pa <= 0.0 {
                continue;
            }
            let mut as2 = as_.clone();
            as2.push(a);
            if t == t_max {
                trs.push(Trajectory {
                    covariates: xs.iter().map(|&x| vec![x]).collect(),
                    treatments: as2,
                    outcome: world.outcome_mean(2 * h + a as usize),
                });
                probs.push(prob * pa);
            } else {
                for (xi, &px) in world.transition(t + 1, 2 * h + a as usize).iter().enumerate() {
                    if px <= 0.0 {
                        continue;
                    }
                    let mut xs2 = xs.clone();
                    xs2.push(world.support(t + 1)[xi]);
                    stack.push((t + 1, world.child(t, h, a, xi), prob * pa * px, xs2, as2.clone()));
                }
            }
        }
    }
    Ok((PanelDataset::new(trs)?, probs))
}
