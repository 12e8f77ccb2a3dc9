use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Result;
use crate::panel::{PanelDataset, Trajectory};
use crate::rng;

/// The simulation design; `floor > 0` clamps the propensity into
/// `[floor, 1 - floor]`, which repairs positivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dgp {
    pub floor: f64,
}

impl Default for Dgp {
    fn default() -> Self {
        Dgp { floor: 0.0 }
    }
}

impl Dgp {
    pub fn positivity_repaired(floor: f64) -> Self {
        Dgp { floor }
    }

    /// `P(A_t = 1 | X_t = u)`.
    pub fn propensity(&self, u: f64) -> f64 {
        let g = if (0.1..=0.9).contains(&u) { (u - 0.1) / 0.8 } else { 0.0 };
        g.clamp(self.floor, 1.0 - self.floor)
    }

    pub fn x2(x1: f64, a1: u8) -> f64 {
        (x1 + f64::from(a1)) / 2.0
    }

    /// `E[Y | X1, A1, A2]`.
    pub fn outcome_mean(x1: f64, a1: u8, a2: u8) -> f64 {
        x1 + Self::x2(x1, a1) + f64::from(a1) + f64::from(a2)
    }

    /// Values of `u` at which the propensity has a kink.
    pub(crate) fn kinks(&self) -> Vec<f64> {
        let mut k = vec![0.1, 0.9];
        if self.floor > 0.0 {
            k.push(0.1 + 0.8 * self.floor);
            k.push(0.9 - 0.8 * self.floor);
        }
        k
    }
}

/// A sampled panel with the true propensities at the observed histories.
#[derive(Debug, Clone)]
pub struct SimData {
    pub data: PanelDataset,
    /// `[π_1(H_1), π_2(H_2)]` per observation.
    pub pi: Vec<[f64; 2]>,
}

pub fn generate_dgp(dgp: &Dgp, n: usize, seed: u64) -> Result<SimData> {
    let rows: Vec<(Trajectory, [f64; 2])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[0xD6, i as u64]);
            let x1: f64 = r.random();
            let p1 = dgp.propensity(x1);
            let a1 = u8::from(r.random::<f64>() < p1);
            let x2 = Dgp::x2(x1, a1);
            let p2 = dgp.propensity(x2);
            let a2 = u8::from(r.random::<f64>() < p2);
            let g: f64 = StandardNormal.sample(&mut r);
            let y = Dgp::outcome_mean(x1, a1, a2) + g;
            let tr = Trajectory { covariates: vec![vec![x1], vec![x2]], treatments: vec![a1, a2], outcome: y };
            (tr, [p1, p2])
        })
        .collect();
    let (trs, pi): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let names = Some(vec![vec!["x1".to_string()], vec!["x2".to_string()]]);
    let ids = (1..=n).map(|i| i.to_string()).collect();
    Ok(SimData { data: PanelDataset::with_ids(ids, trs, names)?, pi })
}
