use super::{DiscreteWorld, History};
use crate::error::{Error, Result};

const NAMES: [&str; 6] =
    ["wate-a", "wate-b", "wate-c", "positivity-t2", "confounded-t2", "inert-t2"];

pub fn bundled_names() -> &'static [&'static str] {
    &NAMES
}

fn single(px: [f64; 4], pi: [f64; 4], mu0: [f64; 4], mu1: [f64; 4]) -> Result<DiscreteWorld<f64>> {
    let mut mu = Vec::with_capacity(8);
    for x in 0..4 {
        mu.push(mu0[x]);
        mu.push(mu1[x]);
    }
    DiscreteWorld::new(
        vec![vec![0.0, 1.0, 2.0, 3.0]],
        px.to_vec(),
        Vec::new(),
        vec![pi.to_vec()],
        mu,
        1.0,
    )
}

fn bern(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

/// Small worlds used by tests, examples and the CLI.
///
/// * `wate-a`..`wate-c`: one timepoint, four covariate values; `wate-c`
///   has propensities of exactly 0 and 1.
/// * `positivity-t2`: two timepoints, binary covariates, with histories at
///   which one arm is never taken.
/// * `confounded-t2`: two timepoints with positivity and time-varying
///   confounding.
/// * `inert-t2`: treatment moves neither covariates nor the outcome, but
///   the propensities depend on the history.
pub fn bundled(name: &str) -> Result<DiscreteWorld<f64>> {
    match name {
        "wate-a" => single(
            [0.1, 0.2, 0.3, 0.4],
            [0.2, 0.4, 0.6, 0.8],
            [0.0, 1.0, 0.5, 2.0],
            [1.0, 1.5, 2.5, 2.2],
        ),
        "wate-b" => single(
            [0.25, 0.25, 0.25, 0.25],
            [0.05, 0.5, 0.9, 0.97],
            [3.0, -1.0, 0.0, 1.0],
            [2.0, 1.0, 4.0, 1.5],
        ),
        "wate-c" => single(
            [0.4, 0.3, 0.2, 0.1],
            [0.0, 0.3, 0.7, 1.0],
            [1.0, 0.0, -2.0, 0.5],
            [4.0, 0.2, 1.0, 0.0],
        ),
        "positivity-t2" => DiscreteWorld::from_fns(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![0.45, 0.55],
            |_, h: &History<f64>, a| bern(0.25 + 0.3 * h.x[0] + 0.35 * f64::from(a)),
            |h| match h.x.len() {
                1 => [0.0, 0.6][h.x[0] as usize],
                _ => {
                    // never treated after (x1=0, x2=0), always after (x1=1, x2=1)
                    let (x1, a1, x2) = (h.x[0], h.a[0], h.x[1]);
                    if x1 == 0.0 && x2 == 0.0 {
                        0.0
                    } else if x1 == 1.0 && x2 == 1.0 {
                        1.0
                    } else {
                        0.3 + 0.2 * x2 + 0.2 * f64::from(a1)
                    }
                }
            },
            |h, a| 1.0 + h.x[0] - 0.5 * h.x[1] + 0.8 * f64::from(h.a[0]) + 1.2 * f64::from(a)
                + 0.5 * h.x[1] * f64::from(a),
            1.0,
        ),
        "confounded-t2" => DiscreteWorld::from_fns(
            vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0]],
            vec![0.3, 0.45, 0.25],
            |_, h: &History<f64>, a| bern(0.2 + 0.2 * h.x[0] + 0.3 * f64::from(a)),
            |h| match h.x.len() {
                1 => 0.25 + 0.2 * h.x[0],
                _ => 0.2 + 0.15 * h.x[0] + 0.25 * h.x[1] + 0.15 * f64::from(h.a[0]),
            },
            |h, a| {
                0.5 * h.x[0] + h.x[1] + 0.7 * f64::from(h.a[0]) + f64::from(a)
                    - 0.4 * h.x[0] * f64::from(a)
            },
            1.0,
        ),
        "inert-t2" => DiscreteWorld::from_fns(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            |_, h: &History<f64>, _| bern(0.3 + 0.4 * h.x[0]),
            |h| match h.x.len() {
                1 => 0.3 + 0.3 * h.x[0],
                _ => 0.2 + 0.3 * h.x[1] + 0.3 * f64::from(h.a[0]),
            },
            |h, _| 1.0 + 2.0 * h.x[0] - h.x[1],
            1.0,
        ),
        other => Err(Error::Config(format!(
            "unknown world '{other}'; bundled worlds: {}",
            NAMES.join(", ")
        ))),
    }
}
