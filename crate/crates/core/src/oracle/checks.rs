use super::enumerate::{exact_psi, exact_treatment_mean};
use super::DiscreteWorld;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::weights::{FlipWeight, TargetRegime};

/// The two sides of the single-timepoint equivalence between the
/// interventional flip effect and the weighted average treatment effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WateCheck<F> {
    /// Mean outcome contrast per unit of extra treatment, from the flip
    /// mechanism.
    pub lhs: F,
    /// `Σ_x CATE(x) f(x) P(x) / Σ_x f(x) P(x)`.
    pub rhs: F,
}

/// Single-timepoint world; `f(x)` is the weight evaluated at
/// `π(x) = P(A = 1 | x)` and is shared by both flip interventions.
pub fn exact_wate_single<F: Scalar>(
    world: &DiscreteWorld<F>,
    weight: &dyn FlipWeight<F>,
) -> Result<WateCheck<F>> {
    if world.horizon() != 1 {
        return Err(Error::Config(format!("needs T=1, world has T={}", world.horizon())));
    }
    let zero = F::zero();
    let one = F::one();
    let (mut y1, mut y0, mut d1, mut d0) = (zero, zero, zero, zero);
    let (mut num, mut den) = (zero, zero);
    for (x, &px) in world.p_x1().iter().enumerate() {
        let pi = world.propensity(1, x);
        let f = weight.eval(pi);
        let mu = [world.outcome_mean(2 * x), world.outcome_mean(2 * x + 1)];
        // natural treatment a, flip event V <= f
        for a in 0..=1u8 {
            let pa = if a == 1 { pi } else { one - pi };
            for flip in [true, false] {
                let pv = if flip { f } else { one - f };
                let w = px * pa * pv;
                let toward_one = if a == 1 || flip { 1usize } else { 0 };
                let toward_zero = if a == 1 && !flip { 1usize } else { 0 };
                y1 = y1 + w * mu[toward_one];
                y0 = y0 + w * mu[toward_zero];
                d1 = d1 + w * F::lit(toward_one as f64);
                d0 = d0 + w * F::lit(toward_zero as f64);
            }
        }
        num = num + (mu[1] - mu[0]) * f * px;
        den = den + f * px;
    }
    if den <= zero || d1 - d0 <= zero {
        return Err(Error::UndefinedEstimand(format!(
            "weight '{}' has zero mass: E f(X) = {den}",
            weight.label()
        )));
    }
    Ok(WateCheck { lhs: (y1 - y0) / (d1 - d0), rhs: num / den })
}

/// Classical g-formula for a static regime by direct enumeration of
/// covariate paths; needs positivity of the regime.
pub fn static_g_formula<F: Scalar>(world: &DiscreteWorld<F>, regime: &TargetRegime) -> Result<F> {
    let t_max = world.horizon();
    if regime.horizon() != t_max {
        return Err(Error::Config(format!("regime {regime} does not match T={t_max}")));
    }
    let sizes: Vec<usize> = (1..=t_max).map(|t| world.support(t).len()).collect();
    let mut idx = vec![0usize; t_max];
    let mut total = F::zero();
    loop {
        let mut prob = world.p_x1()[idx[0]];
        let mut h = idx[0];
        for t in 2..=t_max {
            let a = regime.at(t - 1);
            prob = prob * world.transition(t, 2 * h + a as usize)[idx[t - 1]];
            h = (2 * h + a as usize) * sizes[t - 1] + idx[t - 1];
        }
        total = total + prob * world.outcome_mean(2 * h + regime.at(t_max) as usize);
        // odometer
        let mut k = t_max;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `E[Y Π_t r_t(A_t | H_t)]` over the observational distribution.
pub fn ipw_form_psi<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime: &TargetRegime,
    weight: &dyn FlipWeight<F>,
) -> Result<F> {
    let t_max = world.horizon();
    super::enumerate::forward_masses(world, regime, weight, t_max)?;
    fn walk<F: Scalar>(
        world: &DiscreteWorld<F>,
        regime: &TargetRegime,
        weight: &dyn FlipWeight<F>,
        t: usize,
        h: usize,
        prob: F,
        ratio: F,
    ) -> F {
        let pi1 = world.propensity(t, h);
        let q = world.intervention(t, h, regime.at(t), weight);
        let mut total = F::zero();
        for a in 0..=1u8 {
            let pa = if a == 1 { pi1 } else { F::one() - pi1 };
            if pa <= F::zero() {
                continue;
            }
            let p_obs = prob * pa;
            let r = ratio * (q[a as usize] / pa);
            if t == world.horizon() {
                total = total + p_obs * r * world.outcome_mean(2 * h + a as usize);
            } else {
                for (xi, &px) in world.transition(t + 1, 2 * h + a as usize).iter().enumerate() {
                    if px > F::zero() {
                        let child = world.child(t, h, a, xi);
                        total = total + walk(world, regime, weight, t + 1, child, p_obs * px, r);
                    }
                }
            }
        }
        total
    }
    Ok(world
        .p_x1()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > F::zero())
        .map(|(h, &p)| walk(world, regime, weight, 1, h, p, F::one()))
        .sum())
}

/// Exact ratio flip effect between two regimes.
pub fn exact_flip_effect<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime_a: &TargetRegime,
    regime_b: &TargetRegime,
    weight: &dyn FlipWeight<F>,
) -> Result<F> {
    let (num, den) = flip_parts(world, regime_a, regime_b, weight)?;
    if den <= F::zero() {
        return Err(Error::UndefinedEstimand(
            "the two regimes induce the same treatment means at every t".into(),
        ));
    }
    Ok(num / den)
}

fn flip_parts<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime_a: &TargetRegime,
    regime_b: &TargetRegime,
    weight: &dyn FlipWeight<F>,
) -> Result<(F, F)> {
    let t_max = world.horizon();
    let num = exact_psi(world, regime_a, weight)? - exact_psi(world, regime_b, weight)?;
    let mut den = F::zero();
    for t in 1..=t_max {
        let d = exact_treatment_mean(world, regime_a, weight, t)?
            - exact_treatment_mean(world, regime_b, weight, t)?;
        den = den + d.abs();
    }
    Ok((num, den / F::lit(t_max as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpNull<F> {
    pub ratio: F,
    /// Whether the world satisfies the sharp null, in which case `ratio`
    /// has been certified to vanish.
    pub null_holds: bool,
}

/// Outcome means identical across treatment paths and covariate
/// transitions unaffected by past treatment.
fn treatment_inert<F: Scalar>(world: &DiscreteWorld<F>) -> bool {
    let t_max = world.horizon();
    let same = |a: F, b: F| (a - b).abs() <= F::lit(1e-14) * (F::one() + a.abs());
    let zeroed = |t: usize, h: usize| -> usize {
        let hist = world.decode(t, h);
        world.encode(&hist.x, &vec![0; t - 1]).expect("decoded history re-encodes")
    };
    for h in 0..world.n_hist(t_max) {
        let base = world.outcome_mean(2 * zeroed(t_max, h));
        if !same(world.outcome_mean(2 * h), base) || !same(world.outcome_mean(2 * h + 1), base) {
            return false;
        }
    }
    for t in 2..=t_max {
        for h in 0..world.n_hist(t - 1) {
            let base = world.transition(t, 2 * zeroed(t - 1, h));
            for a in 0..=1 {
                let row = world.transition(t, 2 * h + a);
                if row.iter().zip(base).any(|(&p, &q)| !same(p, q)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Exact flip effect on a world; when the world is treatment-inert the
/// result is asserted to vanish to 1e-12.
pub fn sharp_null_certify<F: Scalar>(
    world: &DiscreteWorld<F>,
    regime_a: &TargetRegime,
    regime_b: &TargetRegime,
    weight: &dyn FlipWeight<F>,
) -> Result<SharpNull<F>> {
    let (num, den) = flip_parts(world, regime_a, regime_b, weight)?;
    if den <= F::zero() {
        return Err(Error::Precondition(
            "treatment means agree at every t, so the flip effect is undefined".into(),
        ));
    }
    let ratio = num / den;
    let null_holds = treatment_inert(world);
    if null_holds && ratio.abs() > F::lit(1e-12) {
        return Err(Error::Precondition(format!(
            "world is treatment-inert but the flip effect is {ratio}"
        )));
    }
    Ok(SharpNull { ratio, null_holds })
}
