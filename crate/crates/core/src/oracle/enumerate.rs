use super::DiscreteWorld;
use crate::error::{Error, Result};
use crate::nuisance::Functional;
use crate::scalar::Scalar;
use crate::weights::{FlipWeight, TargetRegime};

fn check_regime<F: Scalar>(world: &DiscreteWorld<F>, regime: &TargetRegime) -> Result<()> {
    if regime.horizon() != world.horizon() {
        return Err(Error::Config(format!(
            "regime {regime} has length {} but the world has T={}",
            regime.horizon(),
            world.horizon()
        )));
    }
    Ok(())
}

/// Probability of each `H_t`, `t = 1..=last`, under the intervention.
/// Fails if a reachable history has zero target propensity and a weight
/// that does not vanish there.
pub(crate) fn forward_masses<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
    last: usize,
) -> Result<Vec<Vec<F>>> {
    check_regime(world, regime)?;
    let mut masses = vec![world.p_x1().to_vec()];
    for t in 1..=last {
        let a_t = regime.at(t);
        let cur = &masses[t - 1];
        for (h, &mass) in cur.iter().enumerate() {
            if mass <= F::zero() {
                continue;
            }
            let pi1 = world.propensity(t, h);
            let p = if a_t == 1 { pi1 } else { F::one() - pi1 };
            if p == F::zero() && weight.eval(F::zero()) > F::zero() {
                return Err(Error::Identification {
                    t,
                    history: Some(world.describe(t, h)),
                    msg: format!(
                        "target arm {a_t} has probability 0 but weight '{}' is positive there",
                        weight.label()
                    ),
                });
            }
        }
        if t < last {
            let mut next = vec![F::zero(); world.n_hist(t + 1)];
            for (h, &mass) in cur.iter().enumerate() {
                if mass <= F::zero() {
                    continue;
                }
                let q = world.intervention(t, h, a_t, weight);
                for a in 0..=1u8 {
                    let ma = mass * q[a as usize];
                    if ma <= F::zero() {
                        continue;
                    }
                    let row = world.transition(t + 1, 2 * h + a as usize);
                    for (xi, &px) in row.iter().enumerate() {
                        next[world.child(t, h, a, xi)] = next[world.child(t, h, a, xi)] + ma * px;
                    }
                }
            }
            masses.push(next);
        }
    }
    Ok(masses)
}

/// Exact `m_t(b, h)` for `t = 1..=L`, indexed `[t-1][h][b]`.
pub fn sequential_tables<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
    functional: Functional,
) -> Result<Vec<Vec<[F; 2]>>> {
    let l = functional.last(world.horizon());
    if l == 0 || l > world.horizon() {
        return Err(Error::Domain(format!("t* = {l} outside 1..={}", world.horizon())));
    }
    forward_masses(world, regime, weight, l)?;
    let mut tables: Vec<Vec<[F; 2]>> = vec![Vec::new(); l];
    tables[l - 1] = match functional {
        Functional::Outcome => (0..world.n_hist(l))
            .map(|h| [world.outcome_mean(2 * h), world.outcome_mean(2 * h + 1)])
            .collect(),
        Functional::TreatmentMean { .. } => vec![[F::zero(), F::one()]; world.n_hist(l)],
    };
    for t in (1..l).rev() {
        let next = &tables[t];
        // V_{t+1}(h') = Σ_b m_{t+1}(b, h') Q_{t+1}(b | h')
        let v: Vec<F> = (0..world.n_hist(t + 1))
            .map(|h| {
                let q = world.intervention(t + 1, h, regime.at(t + 1), weight);
                next[h][0] * q[0] + next[h][1] * q[1]
            })
            .collect();
        let cur = (0..world.n_hist(t))
            .map(|h| {
                let mut m = [F::zero(); 2];
                for a in 0..=1u8 {
                    let row = world.transition(t + 1, 2 * h + a as usize);
                    m[a as usize] = row
                        .iter()
                        .enumerate()
                        .map(|(xi, &px)| px * v[world.child(t, h, a, xi)])
                        .sum();
                }
                m
            })
            .collect();
        tables[t - 1] = cur;
    }
    Ok(tables)
}

fn top<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
    m1: &[[F; 2]],
) -> F {
    world
        .p_x1()
        .iter()
        .enumerate()
        .map(|(h, &px)| {
            let q = world.intervention(1, h, regime.at(1), weight);
            px * (m1[h][0] * q[0] + m1[h][1] * q[1])
        })
        .sum()
}

/// `E[Y(D(ā))]` by backward recursion over the nested g-formula.
pub fn exact_psi<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
) -> Result<F> {
    let tables = sequential_tables(world, regime, weight, Functional::Outcome)?;
    Ok(top(world, regime, weight, &tables[0]))
}

/// `E[D_{t*}(a_{t*})]`.
pub fn exact_treatment_mean<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
    t_star: usize,
) -> Result<F> {
    let tables =
        sequential_tables(world, regime, weight, Functional::TreatmentMean { t_star })?;
    Ok(top(world, regime, weight, &tables[0]))
}

/// `E[Y(D(ā))]` by pushing intervention mass forward through the world.
pub fn exact_psi_forward<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
) -> Result<F> {
    let t_max = world.horizon();
    let masses = forward_masses(world, regime, weight, t_max)?;
    Ok(masses[t_max - 1]
        .iter()
        .enumerate()
        .map(|(h, &mass)| {
            let q = world.intervention(t_max, h, regime.at(t_max), weight);
            mass * (q[0] * world.outcome_mean(2 * h) + q[1] * world.outcome_mean(2 * h + 1))
        })
        .sum())
}
