use super::dgp::Dgp;
use crate::error::{Error, Result};
use crate::weights::{intervention_propensity, FlipWeight, SmoothWeight, TargetRegime};

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_DEPTH: u32 = 48;

    #[allow(clippy::too_many_arguments)]
    fn go(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // a jump inside a vanishing interval contributes nothing
        if delta.abs() <= 15.0 * tol || b - a < 1e-13 {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature(format!("no convergence on [{a}, {b}]")));
        }
        Ok(go(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + go(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }

    if !(b > a) {
        return Ok(0.0);
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = go(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Quadrature("non-finite integrand".into()))
    }
}

fn check(dgp: &Dgp, regime: &TargetRegime, weight: &SmoothWeight<f64>) -> Result<()> {
    if regime.horizon() != 2 {
        return Err(Error::Config(format!("regime {regime} must have length 2")));
    }
    if dgp.floor <= 0.0 && !weight.vanishes_at_zero() {
        return Err(Error::Identification {
            t: 1,
            history: None,
            msg: format!(
                "weight '{weight}' does not vanish at 0 and the design has exact positivity violations"
            ),
        });
    }
    Ok(())
}

/// `Q_t(b | u)` for target `a_t` at covariate value `u`.
fn q(dgp: &Dgp, u: f64, b: u8, a_t: u8, w: &SmoothWeight<f64>) -> f64 {
    let pi1 = dgp.propensity(u);
    let p = if a_t == 1 { pi1 } else { 1.0 - pi1 };
    intervention_propensity(b, a_t, p, w)
}

/// Integration segments of `X1` between the integrand's kinks.
fn segments(dgp: &Dgp) -> Vec<f64> {
    let mut pts = vec![0.0, 1.0];
    for k in dgp.kinks() {
        // kinks of g(X1) and of g((X1 + a1) / 2)
        for x in [k, 2.0 * k, 2.0 * k - 1.0] {
            if x > 0.0 && x < 1.0 {
                pts.push(x);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    pts
}

fn integrate(dgp: &Dgp, f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let pts = segments(dgp);
    let tol = 1e-8 / (pts.len() - 1) as f64;
    pts.windows(2).map(|w| adaptive_simpson(f, w[0], w[1], tol)).sum()
}

/// `E[Y(D(ā))]` for the simulation design, by quadrature over `X1`.
pub fn true_psi_dgp(dgp: &Dgp, regime: &TargetRegime, weight: &SmoothWeight<f64>) -> Result<f64> {
    check(dgp, regime, weight)?;
    let (r1, r2) = (regime.at(1), regime.at(2));
    let f = |x1: f64| -> f64 {
        let mut v = 0.0;
        for a1 in 0..=1u8 {
            let q1 = q(dgp, x1, a1, r1, weight);
            let x2 = Dgp::x2(x1, a1);
            for a2 in 0..=1u8 {
                v += q1 * q(dgp, x2, a2, r2, weight) * Dgp::outcome_mean(x1, a1, a2);
            }
        }
        v
    };
    integrate(dgp, &f)
}

/// `E[D_{t*}(a_{t*})]` for the simulation design.
pub fn true_treatment_mean_dgp(
    dgp: &Dgp,
    regime: &TargetRegime,
    weight: &SmoothWeight<f64>,
    t_star: usize,
) -> Result<f64> {
    check(dgp, regime, weight)?;
    let (r1, r2) = (regime.at(1), regime.at(2));
    let f = |x1: f64| -> f64 {
        match t_star {
            1 => q(dgp, x1, 1, r1, weight),
            _ => (0..=1u8)
                .map(|a1| q(dgp, x1, a1, r1, weight) * q(dgp, Dgp::x2(x1, a1), 1, r2, weight))
                .sum(),
        }
    };
    if !(1..=2).contains(&t_star) {
        return Err(Error::Domain(format!("t* = {t_star} outside 1..=2")));
    }
    integrate(dgp, &f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_kinks() {
        let v = adaptive_simpson(&|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn static_regime_closed_form() {
        // E[X1 + (X1 + 1)/2 + 2] = 3.25 under always-treat
        let dgp = Dgp::positivity_repaired(0.1);
        let one = SmoothWeight::ConstantOne;
        let v = true_psi_dgp(&dgp, &"11".parse().unwrap(), &one).unwrap();
        assert!((v - 3.25).abs() < 1e-9, "{v}");
        let v = true_psi_dgp(&dgp, &"00".parse().unwrap(), &one).unwrap();
        assert!((v - 0.75).abs() < 1e-9, "{v}");
        assert!(true_psi_dgp(&Dgp::default(), &"11".parse().unwrap(), &one).is_err());
    }

    #[test]
    fn weights_give_finite_values_despite_violations() {
        let dgp = Dgp::default();
        for w in [SmoothWeight::smooth_trim(10.0).unwrap(), SmoothWeight::Overlap] {
            let a = true_psi_dgp(&dgp, &"11".parse().unwrap(), &w).unwrap();
            let b = true_psi_dgp(&dgp, &"00".parse().unwrap(), &w).unwrap();
            assert!(a.is_finite() && b.is_finite() && a > b);
            let d1 = true_treatment_mean_dgp(&dgp, &"11".parse().unwrap(), &w, 1).unwrap();
            assert!(d1 > 0.0 && d1 < 1.0);
        }
    }
}
