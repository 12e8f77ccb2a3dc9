//! Per-observation influence-function arithmetic, generic over the scalar.
//!
//! Timepoints are 1-based in the public functions; slices hold entries for
//! `t = 1..=L` where `L` is the last timepoint of the functional. The
//! `terminal` value is `Y` for an outcome mean and `A_{t*}` for a treatment
//! mean (whose last regression is then pinned to `m(b) = b`).

use crate::error::{Error, Result};
use crate::scalar::{indicator, Scalar};
use crate::weights::{intervention_propensity, propensity_ratio, SmoothWeight};

/// Correction term for estimating `Q_t(b | H_t)`:
/// `{2·1(b = a_t) - 1}{1(A = a_t) - p}[1 - s(p) + s'(p)(1 - p)]`, with `p`
/// the target propensity `P(A_t = a_t | H_t)`.
pub fn phi_t<F: Scalar>(b: u8, a_t: u8, a_obs: u8, pi_target: F, s: &SmoothWeight<F>) -> F {
    let one = F::one();
    let sign = if b == a_t { one } else { -one };
    let resid = indicator::<F>(a_obs == a_t) - pi_target;
    let bracket = one - s.raw_value(pi_target) + s.raw_deriv(pi_target) * (one - pi_target);
    sign * resid * bracket
}

/// Intervention quantities of one observation at one timepoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<F> {
    /// `Q_t(b | H_t)` indexed by `b`.
    pub q: [F; 2],
    /// `r_t(A_t | H_t)` at the observed treatment.
    pub r: F,
    /// `φ_t(b; A_t, H_t)` indexed by `b`.
    pub phi: [F; 2],
}

/// Builds a [`Step`] from `π = P(A_t = 1 | H_t)`.
pub fn step<F: Scalar>(a_t: u8, a_obs: u8, pi1: F, s: &SmoothWeight<F>) -> Result<Step<F>> {
    if !(pi1 >= F::zero() && pi1 <= F::one()) {
        return Err(Error::Domain(format!("propensity {pi1} outside [0,1]")));
    }
    let p = if a_t == 1 { pi1 } else { F::one() - pi1 };
    let q = [
        intervention_propensity(0, a_t, p, s),
        intervention_propensity(1, a_t, p, s),
    ];
    let r = propensity_ratio(a_obs, a_t, p, s)?;
    let phi = [phi_t(0, a_t, a_obs, p, s), phi_t(1, a_t, a_obs, p, s)];
    Ok(Step { q, r, phi })
}

/// `Σ_b m(b) Q(b)`.
#[inline]
pub fn plug_in<F: Scalar>(st: &Step<F>, m: &[F; 2]) -> F {
    m[0] * st.q[0] + m[1] * st.q[1]
}

/// `Σ_b m(b) {Q(b) + φ(b)}`.
#[inline]
pub fn debiased<F: Scalar>(st: &Step<F>, m: &[F; 2]) -> F {
    m[0] * (st.q[0] + st.phi[0]) + m[1] * (st.q[1] + st.phi[1])
}

/// `P*_t`: unrolled from `P*_{L+1} = terminal` by
/// `P*_s = Σ_b m_s(b){Q_s(b) + φ_s(b)} + r_s (P*_{s+1} - m_s(A_s))`.
pub fn debiased_pseudo_outcome<F: Scalar>(
    t: usize,
    steps: &[Step<F>],
    m: &[[F; 2]],
    a: &[u8],
    terminal: F,
) -> F {
    let mut p = terminal;
    for s in (t..=steps.len()).rev() {
        let k = s - 1;
        p = debiased(&steps[k], &m[k]) + steps[k].r * (p - m[k][a[k] as usize]);
    }
    p
}

/// The two parts `(φ_m, φ_Q)` of the efficient influence function, with
/// `m0` the plug-in mean.
pub fn eif_parts<F: Scalar>(
    steps: &[Step<F>],
    m: &[[F; 2]],
    a: &[u8],
    terminal: F,
    m0: F,
) -> (F, F) {
    let l = steps.len();
    let mut phi_m = plug_in(&steps[0], &m[0]) - m0;
    let mut phi_q = F::zero();
    let mut prod = F::one();
    for k in 0..l {
        phi_q = phi_q + prod * (m[k][0] * steps[k].phi[0] + m[k][1] * steps[k].phi[1]);
        prod = prod * steps[k].r;
        let next = if k + 1 < l { plug_in(&steps[k + 1], &m[k + 1]) } else { terminal };
        phi_m = phi_m + prod * (next - m[k][a[k] as usize]);
    }
    (phi_m, phi_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type W = SmoothWeight<f64>;

    #[test]
    fn phi_examples() {
        assert!((phi_t(1, 1, 1, 0.5, &W::Overlap) - 0.375).abs() < 1e-15);
        for a in 0..=1 {
            for b in 0..=1 {
                assert_eq!(phi_t(b, 1, a, 0.3, &W::ConstantOne), 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn phi_conditional_mean_zero(p in 0.001f64..0.999, a_t in 0u8..=1, b in 0u8..=1, k in 0.5f64..30.0) {
            for w in W::catalog(k) {
                // P(A = a_t) = p
                let mean = p * phi_t(b, a_t, a_t, p, &w) + (1.0 - p) * phi_t(b, a_t, 1 - a_t, p, &w);
                prop_assert!(mean.abs() < 1e-12);
            }
        }

        #[test]
        fn sdr_score_equals_plug_in_plus_eif(
            pis in proptest::collection::vec(0.02f64..0.98, 3),
            a in proptest::collection::vec(0u8..=1, 3),
            target in proptest::collection::vec(0u8..=1, 3),
            ms in proptest::collection::vec(-3.0f64..3.0, 6),
            y in -5.0f64..5.0,
        ) {
            let w = W::SmoothTrim { rate: 7.0 };
            let steps: Vec<_> = (0..3).map(|k| step(target[k], a[k], pis[k], &w).unwrap()).collect();
            let m: Vec<[f64; 2]> = (0..3).map(|k| [ms[2 * k], ms[2 * k + 1]]).collect();
            let m0 = plug_in(&steps[0], &m[0]);
            let (pm, pq) = eif_parts(&steps, &m, &a, y, m0);
            let pstar = debiased_pseudo_outcome(1, &steps, &m, &a, y);
            prop_assert!((m0 + pm + pq - pstar).abs() < 1e-10);
        }
    }

    #[test]
    fn last_step_pseudo_outcome() {
        let w = W::Overlap;
        let st = step(1, 0, 0.4, &w).unwrap();
        let m = [[1.5, 2.5]];
        let y = 3.0;
        let expect = debiased(&st, &m[0]) + st.r * (y - 1.5);
        assert_eq!(debiased_pseudo_outcome(1, &[st], &m, &[0], y), expect);
    }

    #[test]
    fn aipw_reduction_single_timepoint() {
        // constant one: r = 1(A=a)/π_a, φ ≡ 0, so P* = m(a) + 1(A=a)/π_a (Y - m(a))
        let w = W::ConstantOne;
        for (a_obs, pi1, y) in [(1u8, 0.3, 2.0), (0, 0.3, -1.0), (1, 0.8, 0.5)] {
            let st = step(1, a_obs, pi1, &w).unwrap();
            let m = [[0.7, 1.9]];
            let aipw = 1.9 + if a_obs == 1 { (y - 1.9) / pi1 } else { 0.0 };
            let got = debiased_pseudo_outcome(1, &[st], &m, &[a_obs], y);
            assert!((got - aipw).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_kernel_f32() {
        let w = SmoothWeight::<f32>::Overlap;
        let st = step(1u8, 1u8, 0.5f32, &w).unwrap();
        assert!((st.q[1] - 0.625).abs() < 1e-6);
        assert!((st.r - 1.25).abs() < 1e-6);
    }
}
