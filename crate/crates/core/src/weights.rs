//! Flipping-probability catalog.
//!
//! A flip intervention targeting `a_t` leaves subjects whose natural treatment
//! already equals `a_t` alone and flips the rest with probability
//! `s(p)`, where `p = P(A_t = a_t | H_t)` is the *target* propensity. Every
//! quantity here is a function of that target propensity, so the same
//! weight evaluated under two contrasted regimes generally differs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A weight `s: [0,1] -> [0,1]` applied to the target propensity.
///
/// Implemented by the smooth catalog below and by the non-smooth weights the
/// exact oracle accepts.
pub trait FlipWeight<F: Scalar>: Send + Sync {
    /// Weight at target propensity `p`; callers guarantee `p ∈ [0,1]`.
    fn eval(&self, p: F) -> F;

    /// Whether `s(0) = 0`, i.e. identification holds without positivity.
    fn vanishes_at_zero(&self) -> bool;

    fn label(&self) -> String;
}

/// Smooth weights usable by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothWeight<F> {
    /// `s = 1`: the static regime.
    ConstantOne,
    /// `s = p`.
    TargetProp,
    /// `s = 1 - p`.
    NontargetProp,
    /// `s = p (1 - p)`.
    Overlap,
    /// `s = 1 - exp(-k p)` with rate `k > 0`.
    SmoothTrim { rate: F },
    /// Binary entropy in bits, `-[p log p + (1-p) log(1-p)] / log 2`.
    Entropy,
}

/// Which identification condition a weight relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentificationCondition {
    /// `s(0) = 0`: identified under arbitrary positivity violations.
    Condition1,
    /// Identified only if the target arm has positive probability a.s.
    RequiresPositivity,
}

fn check_unit<F: Scalar>(p: F, what: &str) -> Result<()> {
    if p >= F::zero() && p <= F::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {p} outside [0,1]")))
    }
}

fn check_binary(v: u8, what: &str) -> Result<()> {
    if v <= 1 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {v} is not binary")))
    }
}

impl<F: Scalar> SmoothWeight<F> {
    pub fn smooth_trim(rate: F) -> Result<Self> {
        if rate > F::zero() && rate.is_finite() {
            Ok(SmoothWeight::SmoothTrim { rate })
        } else {
            Err(Error::Domain(format!("smooth-trim rate {rate} must be positive")))
        }
    }

    /// All kinds, with the given smooth-trim rate.
    pub fn catalog(rate: F) -> [SmoothWeight<F>; 6] {
        [
            SmoothWeight::ConstantOne,
            SmoothWeight::TargetProp,
            SmoothWeight::NontargetProp,
            SmoothWeight::Overlap,
            SmoothWeight::SmoothTrim { rate },
            SmoothWeight::Entropy,
        ]
    }

    pub fn value(&self, p: F) -> Result<F> {
        check_unit(p, "propensity")?;
        Ok(self.raw_value(p))
    }

    pub fn deriv(&self, p: F) -> Result<F> {
        check_unit(p, "propensity")?;
        Ok(self.raw_deriv(p))
    }

    #[inline]
    pub(crate) fn raw_value(&self, p: F) -> F {
        let one = F::one();
        match *self {
            SmoothWeight::ConstantOne => one,
            SmoothWeight::TargetProp => p,
            SmoothWeight::NontargetProp => one - p,
            SmoothWeight::Overlap => p * (one - p),
            SmoothWeight::SmoothTrim { rate } => -(-rate * p).exp_m1(),
            SmoothWeight::Entropy => {
                let xlx = |x: F| if x > F::zero() { x * x.ln() } else { F::zero() };
                -(xlx(p) + xlx(one - p)) / F::lit(std::f64::consts::LN_2)
            }
        }
    }

    /// Derivative; for entropy the endpoints return the one-sided limits
    /// `+inf` at 0 and `-inf` at 1.
    #[inline]
    pub(crate) fn raw_deriv(&self, p: F) -> F {
        let one = F::one();
        match *self {
            SmoothWeight::ConstantOne => F::zero(),
            SmoothWeight::TargetProp => one,
            SmoothWeight::NontargetProp => -one,
            SmoothWeight::Overlap => one - F::lit(2.0) * p,
            SmoothWeight::SmoothTrim { rate } => rate * (-rate * p).exp(),
            SmoothWeight::Entropy => {
                if p <= F::zero() {
                    F::infinity()
                } else if p >= one {
                    F::neg_infinity()
                } else {
                    ((one - p).ln() - p.ln()) / F::lit(std::f64::consts::LN_2)
                }
            }
        }
    }

    pub fn identification(&self) -> IdentificationCondition {
        check_identification(self)
    }

    /// Whether the first derivative is bounded on the closed unit interval.
    pub fn has_bounded_derivative(&self) -> bool {
        !matches!(self, SmoothWeight::Entropy)
    }

    /// Uniform bound on `r(a_t | h)` over `p ∈ (0,1]`, when one exists.
    pub fn ratio_bound(&self) -> Option<F> {
        match *self {
            SmoothWeight::TargetProp | SmoothWeight::Overlap => Some(F::lit(2.0)),
            SmoothWeight::SmoothTrim { rate } => Some(F::one() + rate),
            SmoothWeight::ConstantOne | SmoothWeight::NontargetProp | SmoothWeight::Entropy => None,
        }
    }

    pub fn map_scalar<G: Scalar>(&self) -> SmoothWeight<G> {
        match *self {
            SmoothWeight::ConstantOne => SmoothWeight::ConstantOne,
            SmoothWeight::TargetProp => SmoothWeight::TargetProp,
            SmoothWeight::NontargetProp => SmoothWeight::NontargetProp,
            SmoothWeight::Overlap => SmoothWeight::Overlap,
            SmoothWeight::SmoothTrim { rate } => SmoothWeight::SmoothTrim {
                rate: G::lit(rate.to_f64_lossy()),
            },
            SmoothWeight::Entropy => SmoothWeight::Entropy,
        }
    }
}

impl<F: Scalar> FlipWeight<F> for SmoothWeight<F> {
    fn eval(&self, p: F) -> F {
        self.raw_value(p)
    }

    fn vanishes_at_zero(&self) -> bool {
        check_identification(self) == IdentificationCondition::Condition1
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

impl<F: Scalar> fmt::Display for SmoothWeight<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothWeight::ConstantOne => write!(f, "one"),
            SmoothWeight::TargetProp => write!(f, "target"),
            SmoothWeight::NontargetProp => write!(f, "nontarget"),
            SmoothWeight::Overlap => write!(f, "overlap"),
            SmoothWeight::SmoothTrim { rate } => write!(f, "smooth-trim:{rate}"),
            SmoothWeight::Entropy => write!(f, "entropy"),
        }
    }
}

impl<F: Scalar> FromStr for SmoothWeight<F> {
    type Err = Error;

    /// Parses `one | target | nontarget | overlap | smooth-trim:k | entropy`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "one" => return Ok(SmoothWeight::ConstantOne),
            "target" => return Ok(SmoothWeight::TargetProp),
            "nontarget" => return Ok(SmoothWeight::NontargetProp),
            "overlap" => return Ok(SmoothWeight::Overlap),
            "entropy" => return Ok(SmoothWeight::Entropy),
            _ => {}
        }
        if let Some(rate) = s.strip_prefix("smooth-trim:") {
            let k: f64 = rate
                .parse()
                .map_err(|_| Error::Config(format!("bad smooth-trim rate '{rate}'")))?;
            return SmoothWeight::smooth_trim(F::lit(k));
        }
        Err(Error::Config(format!(
            "unknown weight '{s}' (expected one|target|nontarget|overlap|smooth-trim:k|entropy)"
        )))
    }
}

/// A target regime `(a_1, ..., a_T)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TargetRegime(Vec<u8>);

impl TargetRegime {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Domain("empty target regime".into()));
        }
        for &b in &bits {
            check_binary(b, "target treatment")?;
        }
        Ok(TargetRegime(bits))
    }

    pub fn constant(value: u8, horizon: usize) -> Result<Self> {
        TargetRegime::new(vec![value; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    /// Target at 1-based timepoint `t`.
    #[inline]
    pub fn at(&self, t: usize) -> u8 {
        self.0[t - 1]
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }
}

impl FromStr for TargetRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::Config(format!("regime '{s}' contains '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        TargetRegime::new(bits)
    }
}

impl fmt::Display for TargetRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Probability the flip intervention assigns the target arm:
/// `Q = p + s(p) (1 - p)`.
pub fn target_propensity<F: Scalar, W: FlipWeight<F> + ?Sized>(pi_target: F, s: &W) -> F {
    let q = pi_target + s.eval(pi_target) * (F::one() - pi_target);
    q.max(F::zero()).min(F::one())
}

/// `Q(b) = P(A = b) + {2·1(b = a_t) - 1} s(p) (1 - p)` with `p` the target
/// propensity.
pub fn intervention_propensity<F: Scalar, W: FlipWeight<F> + ?Sized>(
    b: u8,
    a_t: u8,
    pi_target: F,
    s: &W,
) -> F {
    let shift = s.eval(pi_target) * (F::one() - pi_target);
    if b == a_t {
        (pi_target + shift).min(F::one())
    } else {
        ((F::one() - pi_target) - shift).max(F::zero())
    }
}

/// Density ratio `r(b) = Q(b) / P(A = b)`, with `0/0 := 0`.
pub fn propensity_ratio<F: Scalar, W: FlipWeight<F> + ?Sized>(
    b: u8,
    a_t: u8,
    pi_target: F,
    s: &W,
) -> Result<F> {
    check_binary(b, "treatment")?;
    check_binary(a_t, "target")?;
    check_unit(pi_target, "target propensity")?;
    let q = intervention_propensity(b, a_t, pi_target, s);
    let p_b = if b == a_t { pi_target } else { F::one() - pi_target };
    if p_b > F::zero() {
        Ok(q / p_b)
    } else if q == F::zero() {
        Ok(F::zero())
    } else {
        Err(Error::Identification {
            t: 0,
            history: None,
            msg: format!(
                "P(A={b}) = 0 but Q({b}) = {q} > 0 under weight {}",
                s.label()
            ),
        })
    }
}

pub fn check_identification<F: Scalar>(s: &SmoothWeight<F>) -> IdentificationCondition {
    match s {
        SmoothWeight::Overlap
        | SmoothWeight::SmoothTrim { .. }
        | SmoothWeight::Entropy
        | SmoothWeight::TargetProp => IdentificationCondition::Condition1,
        SmoothWeight::ConstantOne | SmoothWeight::NontargetProp => {
            IdentificationCondition::RequiresPositivity
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type W = SmoothWeight<f64>;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=100).map(|j| j as f64 / 100.0)
    }

    #[test]
    fn value_examples() {
        assert_eq!(W::Overlap.value(0.5).unwrap(), 0.25);
        assert_eq!(W::smooth_trim(20.0).unwrap().value(0.0).unwrap(), 0.0);
        assert_eq!(W::ConstantOne.value(0.3).unwrap(), 1.0);
        assert!(W::Overlap.value(1.2).is_err());
        assert!(W::Overlap.value(-0.1).is_err());
        assert!(W::Entropy.value(f64::NAN).is_err());
        assert!((W::Entropy.value(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(W::Entropy.value(0.0).unwrap(), 0.0);
        assert_eq!(W::Entropy.value(1.0).unwrap(), 0.0);
    }

    #[test]
    fn deriv_examples() {
        assert_eq!(W::Overlap.deriv(0.5).unwrap(), 0.0);
        assert_eq!(W::smooth_trim(20.0).unwrap().deriv(0.0).unwrap(), 20.0);
        assert_eq!(W::ConstantOne.deriv(0.77).unwrap(), 0.0);
        assert_eq!(W::Entropy.deriv(0.0).unwrap(), f64::INFINITY);
        assert_eq!(W::Entropy.deriv(1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn smooth_trim_deriv_matches_central_difference_at_zero_side() {
        // s is analytic, so the formula extends to p = -h.
        let k = 20.0;
        let h = 1e-6;
        let s = |p: f64| -(-k * p).exp_m1();
        let fd = (s(h) - s(-h)) / (2.0 * h);
        assert!((fd - 20.0).abs() / 20.0 < 1e-5);
    }

    #[test]
    fn target_propensity_examples() {
        for w in W::catalog(20.0) {
            assert_eq!(target_propensity(1.0, &w), 1.0);
        }
        assert_eq!(target_propensity(0.0, &W::smooth_trim(20.0).unwrap()), 0.0);
        assert!((target_propensity(0.5, &W::Overlap) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn intervention_propensity_examples() {
        let w = W::Overlap;
        assert_eq!(intervention_propensity(1, 1, 0.5, &w), target_propensity(0.5, &w));
        assert!((intervention_propensity(0, 1, 0.5, &w) - 0.375).abs() < 1e-15);
        let st = W::smooth_trim(20.0).unwrap();
        assert_eq!(intervention_propensity(0, 1, 0.0, &st), 1.0);
    }

    #[test]
    fn ratio_examples() {
        let w = W::Overlap;
        assert_eq!(propensity_ratio(1, 1, 1.0, &w).unwrap(), 1.0);
        assert!((propensity_ratio(1, 1, 0.5, &w).unwrap() - 1.25).abs() < 1e-15);
        // both vanish
        assert_eq!(propensity_ratio(1, 1, 0.0, &w).unwrap(), 0.0);
        // constant_one at zero target propensity: Q = 1 but P = 0
        assert!(matches!(
            propensity_ratio(1, 1, 0.0, &W::ConstantOne),
            Err(Error::Identification { .. })
        ));
    }

    #[test]
    fn identification_tags() {
        assert_eq!(check_identification(&W::Overlap), IdentificationCondition::Condition1);
        assert_eq!(
            check_identification(&W::ConstantOne),
            IdentificationCondition::RequiresPositivity
        );
        assert_eq!(
            check_identification(&W::smooth_trim(3.0).unwrap()),
            IdentificationCondition::Condition1
        );
        for w in W::catalog(5.0) {
            let analytic_zero = w.value(0.0).unwrap() == 0.0;
            assert_eq!(analytic_zero, w.identification() == IdentificationCondition::Condition1);
        }
    }

    #[test]
    fn parse_roundtrip() {
        for w in W::catalog(12.5) {
            let parsed: W = w.to_string().parse().unwrap();
            assert_eq!(parsed, w);
        }
        assert!("smooth-trim:-1".parse::<W>().is_err());
        assert!("smooth-trim:x".parse::<W>().is_err());
        assert!("bogus".parse::<W>().is_err());
        let r: TargetRegime = "1010".parse().unwrap();
        assert_eq!(r.bits(), &[1, 0, 1, 0]);
        assert_eq!(r.to_string(), "1010");
        assert!("10a".parse::<TargetRegime>().is_err());
    }

    #[test]
    fn ratio_bounds_on_dense_grid() {
        for w in [W::Overlap, W::TargetProp, W::smooth_trim(20.0).unwrap()] {
            let bound = w.ratio_bound().unwrap();
            for j in 1..=100_000 {
                let p = j as f64 / 100_000.0;
                assert!(propensity_ratio(1, 1, p, &w).unwrap() <= bound + 1e-9, "{w} p={p}");
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let w = SmoothWeight::<f32>::Overlap;
        assert_eq!(w.value(0.5f32).unwrap(), 0.25f32);
        assert!((target_propensity(0.5f32, &w) - 0.625).abs() < 1e-6);
        let st: SmoothWeight<f32> = SmoothWeight::<f64>::SmoothTrim { rate: 10.0 }.map_scalar();
        assert!((st.value(0.1f32).unwrap() - (1.0 - (-1.0f32).exp())).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn conservation_and_monotone_shift(p in 0.0f64..=1.0, k in 0.1f64..50.0, a in 0u8..=1) {
            for w in W::catalog(k) {
                let v = w.value(p).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
                let q_target = intervention_propensity(a, a, p, &w);
                let q_other = intervention_propensity(1 - a, a, p, &w);
                prop_assert!((q_target + q_other - 1.0).abs() < 1e-12);
                prop_assert!(q_target >= p);
                prop_assert!(propensity_ratio(1 - a, a, p, &w).unwrap() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn derivative_grid_is_finite_except_entropy_ends() {
        for w in W::catalog(20.0) {
            for p in grid() {
                let d = w.deriv(p).unwrap();
                if matches!(w, W::Entropy) && (p == 0.0 || p == 1.0) {
                    assert!(d.is_infinite());
                } else {
                    assert!(d.is_finite());
                }
            }
        }
    }
}
