//! Corrupted-truth nuisances for simulation studies.
//!
//! A corrupted value is `true + n^{-α} e(G)` with `G` standard normal,
//! optionally clipped. Both shapes of `e` have root mean square `√2`, so
//! the perturbation has RMSE `√2 · n^{-α}`:
//!
//! * centered, `e = √2 G`: pure noise, errors average out across subjects;
//! * shifted, `e = 1 + G`: adds a bias of order `n^{-α}` shared by every
//!   subject, so products of errors do not average out either.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// `len` independent standard normal draws from the stream `seed`.
pub fn noise_draws(seed: u64, len: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[0x0015E]);
    (0..len).map(|_| StandardNormal.sample(&mut r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseShape {
    #[default]
    Centered,
    Shifted,
}

impl NoiseShape {
    /// Error per unit of `n^{-α}` for the standard normal draw `g`.
    #[inline]
    pub fn error(self, g: f64) -> f64 {
        match self {
            NoiseShape::Centered => std::f64::consts::SQRT_2 * g,
            NoiseShape::Shifted => 1.0 + g,
        }
    }
}

#[inline]
pub fn corrupt(
    value: f64,
    n: usize,
    alpha: f64,
    shape: NoiseShape,
    g: f64,
    bounds: Option<(f64, f64)>,
) -> f64 {
    let v = value + (n as f64).powf(-alpha) * shape.error(g);
    match bounds {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    }
}

pub fn oracle_noise_nuisance(
    true_values: &[f64],
    n: usize,
    alpha: f64,
    shape: NoiseShape,
    seed: u64,
    bounds: Option<(f64, f64)>,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("rate exponent {alpha} outside (0, 1]")));
    }
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let g = noise_draws(seed, true_values.len());
    Ok(true_values
        .iter()
        .zip(&g)
        .map(|(&v, &gi)| corrupt(v, n, alpha, shape, gi, bounds))
        .collect())
}
