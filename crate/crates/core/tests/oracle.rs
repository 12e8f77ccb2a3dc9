use std::path::Path;

use flipfx::oracle::{
    bundled, bundled_names, exact_flip_effect, exact_psi, exact_psi_forward,
    exact_treatment_mean, ipw_form_psi, sharp_null_certify, simulate_flip, static_g_formula,
    DiscreteWorld, FlipMode, OracleWeight, WorldSpec,
};
use flipfx::weights::{FlipWeight, SmoothWeight, TargetRegime};
use flipfx::Error;
use proptest::prelude::*;

fn regime(s: &str) -> TargetRegime {
    s.parse().unwrap()
}

fn all_regimes(t: usize) -> Vec<TargetRegime> {
    (0..1u32 << t)
        .map(|m| TargetRegime::new((0..t).map(|k| ((m >> k) & 1) as u8).collect()).unwrap())
        .collect()
}

fn weights() -> Vec<OracleWeight<f64>> {
    let mut w: Vec<_> = SmoothWeight::catalog(10.0).into_iter().map(OracleWeight::from).collect();
    w.push(OracleWeight::HardTrim { eps: 0.1 });
    w.push(OracleWeight::Matching);
    w
}

/// Binary covariates at both timepoints.
fn binary_t2(p_x1: f64, tr: [f64; 4], pi1: [f64; 2], pi2: [f64; 8], mu: [f64; 16]) -> DiscreteWorld<f64> {
    DiscreteWorld::new(
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        vec![1.0 - p_x1, p_x1],
        vec![tr.iter().map(|&p| vec![1.0 - p, p]).collect()],
        vec![pi1.to_vec(), pi2.to_vec()],
        mu.to_vec(),
        1.0,
    )
    .unwrap()
}

#[test]
fn g_formula_matches_constant_weight() {
    for name in ["confounded-t2", "inert-t2", "wate-a", "wate-b"] {
        let world = bundled(name).unwrap();
        for r in all_regimes(world.horizon()) {
            let g = static_g_formula(&world, &r).unwrap();
            let psi = exact_psi(&world, &r, &SmoothWeight::ConstantOne).unwrap();
            assert!((g - psi).abs() <= 1e-12, "{name} {r}: g-formula {g} vs {psi}");
        }
    }
}

#[test]
fn three_routes_agree_on_bundled_worlds() {
    for name in bundled_names() {
        let world = bundled(name).unwrap();
        for r in all_regimes(world.horizon()) {
            for w in weights() {
                let Ok(back) = exact_psi(&world, &r, &w) else { continue };
                let fwd = exact_psi_forward(&world, &r, &w).unwrap();
                let ipw = ipw_form_psi(&world, &r, &w).unwrap();
                assert!((back - fwd).abs() <= 1e-12, "{name} {r} {}: {back} vs {fwd}", w.label());
                assert!((back - ipw).abs() <= 1e-12, "{name} {r} {}: {back} vs {ipw}", w.label());
            }
        }
    }
}

#[test]
fn violations_are_reported_with_the_history() {
    let world = bundled("positivity-t2").unwrap();
    match exact_psi(&world, &regime("11"), &SmoothWeight::ConstantOne) {
        Err(Error::Identification { t, history: Some(h), .. }) => {
            assert!(t >= 1);
            assert!(!h.is_empty());
        }
        other => panic!("expected an identification error, got {other:?}"),
    }
    // weights that vanish at zero stay identified
    for w in [SmoothWeight::Overlap, SmoothWeight::TargetProp, SmoothWeight::smooth_trim(5.0).unwrap()] {
        exact_psi(&world, &regime("11"), &w).unwrap();
        exact_psi(&world, &regime("00"), &w).unwrap();
    }
}

#[test]
fn flip_pushes_toward_target_in_every_state() {
    for name in bundled_names() {
        let world = bundled(name).unwrap();
        for t in 1..=world.horizon() {
            for h in 0..world.n_hist(t) {
                let pi1 = world.propensity(t, h);
                for a_t in 0..=1u8 {
                    let p = if a_t == 1 { pi1 } else { 1.0 - pi1 };
                    for w in weights() {
                        let q = world.intervention(t, h, a_t, &w);
                        assert!(q[a_t as usize] >= p - 1e-15, "{name} t={t} h={h}");
                        assert!((q[0] + q[1] - 1.0).abs() <= 1e-15);
                    }
                }
            }
        }
    }
}

#[test]
fn treatment_mean_ignores_later_structure() {
    let world = bundled("confounded-t2").unwrap();
    let w = SmoothWeight::Overlap;
    let r = regime("10");
    let d1 = exact_treatment_mean(&world, &r, &w, 1).unwrap();
    let d2 = exact_treatment_mean(&world, &r, &w, 2).unwrap();

    let mut spec = WorldSpec::from(&world);
    for row in &mut spec.transitions[0] {
        row.reverse();
    }
    for p in &mut spec.propensity[1] {
        *p = 1.0 - *p;
    }
    let changed_after_1 = spec.into_world().unwrap();
    assert_eq!(exact_treatment_mean(&changed_after_1, &r, &w, 1).unwrap(), d1);

    let mut spec = WorldSpec::from(&world);
    for m in &mut spec.outcome_mean {
        *m = -3.0 * *m + 1.0;
    }
    let changed_outcome = spec.into_world().unwrap();
    assert_eq!(exact_treatment_mean(&changed_outcome, &r, &w, 1).unwrap(), d1);
    assert_eq!(exact_treatment_mean(&changed_outcome, &r, &w, 2).unwrap(), d2);
}

#[test]
fn outcome_shift_moves_psi_only() {
    let world = bundled("confounded-t2").unwrap();
    let shifted = world.shift_outcome(2.5);
    let w = SmoothWeight::smooth_trim(10.0).unwrap();
    for r in all_regimes(2) {
        let a = exact_psi(&world, &r, &w).unwrap();
        let b = exact_psi(&shifted, &r, &w).unwrap();
        assert!((b - a - 2.5).abs() <= 1e-12);
    }
    let fa = exact_flip_effect(&world, &regime("11"), &regime("00"), &w).unwrap();
    let fb = exact_flip_effect(&shifted, &regime("11"), &regime("00"), &w).unwrap();
    assert!((fa - fb).abs() <= 1e-12);
}

#[test]
fn sharp_null_on_inert_world() {
    let world = bundled("inert-t2").unwrap();
    for w in SmoothWeight::catalog(10.0) {
        let s = sharp_null_certify(&world, &regime("11"), &regime("00"), &w).unwrap();
        assert!(s.null_holds);
        assert!(s.ratio.abs() <= 1e-12);
    }
    let confounded = bundled("confounded-t2").unwrap();
    let s = sharp_null_certify(&confounded, &regime("11"), &regime("00"), &SmoothWeight::Overlap)
        .unwrap();
    assert!(!s.null_holds);
    assert!(s.ratio.abs() > 1e-3);
}

/// Joint law of `(D_1, D_2)` under the intervention, enumerated directly
/// from the flip rule rather than from `Q`.
fn flip_joint(world: &DiscreteWorld<f64>, r: &TargetRegime, w: &SmoothWeight<f64>) -> [f64; 4] {
    let step = |t: usize, h: usize| -> [f64; 2] {
        let a_t = r.at(t) as usize;
        let pi1 = world.propensity(t, h);
        let nat = [1.0 - pi1, pi1];
        let f = w.eval(nat[a_t]);
        // off target: keep with probability 1 - f, otherwise flip
        let mut d = [0.0; 2];
        d[a_t] += nat[a_t] + nat[1 - a_t] * f;
        d[1 - a_t] += nat[1 - a_t] * (1.0 - f);
        d
    };
    let mut joint = [0.0; 4];
    for (x1, &px) in world.p_x1().iter().enumerate() {
        let d1 = step(1, x1);
        for a1 in 0..2 {
            for (xi, &pt) in world.transition(2, 2 * x1 + a1).iter().enumerate() {
                let d2 = step(2, world.child(1, x1, a1 as u8, xi));
                for a2 in 0..2 {
                    joint[2 * a1 + a2] += px * d1[a1] * pt * d2[a2];
                }
            }
        }
    }
    joint
}

#[test]
fn simulated_flip_frequencies_match_enumeration() {
    let world = bundled("positivity-t2").unwrap();
    let n = 1_000_000;
    for (r, w) in [("11", SmoothWeight::Overlap), ("01", SmoothWeight::smooth_trim(5.0).unwrap())] {
        let r = regime(r);
        let joint = flip_joint(&world, &r, &w);
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let draws = simulate_flip(&world, &r, &w, n, 5, FlipMode::Natural).unwrap();
        let mut counts = [0usize; 4];
        for d in &draws.d {
            counts[2 * d[0] as usize + d[1] as usize] += 1;
        }
        for k in 0..4 {
            let p = joint[k];
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
            let freq = counts[k] as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * se, "{r} cell {k}: {freq} vs {p}");
        }
        // the treatment means are the margins of the same law
        let d1 = exact_treatment_mean(&world, &r, &w, 1).unwrap();
        let d2 = exact_treatment_mean(&world, &r, &w, 2).unwrap();
        assert!((d1 - (joint[2] + joint[3])).abs() <= 1e-12);
        assert!((d2 - (joint[1] + joint[3])).abs() <= 1e-12);
    }
}

#[test]
fn stochastic_mode_has_the_same_mean() {
    let world = bundled("confounded-t2").unwrap();
    let w = SmoothWeight::smooth_trim(10.0).unwrap();
    let r = regime("11");
    let truth = exact_psi(&world, &r, &w).unwrap();
    let n = 200_000;
    for mode in [FlipMode::Natural, FlipMode::Stochastic] {
        let d = simulate_flip(&world, &r, &w, n, 17, mode).unwrap();
        let mean = flipfx::stats::mean(&d.y);
        let se = (flipfx::stats::var_pop(&d.y) / n as f64).sqrt();
        assert!((mean - truth).abs() <= 4.0 * se, "{mode:?}: {mean} vs {truth}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let world = bundled("positivity-t2").unwrap();
    let w = SmoothWeight::Overlap;
    let a = simulate_flip(&world, &regime("11"), &w, 1000, 9, FlipMode::Natural).unwrap();
    let b = simulate_flip(&world, &regime("11"), &w, 1000, 9, FlipMode::Natural).unwrap();
    assert_eq!(a, b);
}

#[test]
fn wate_needs_a_single_timepoint() {
    let world = bundled("confounded-t2").unwrap();
    assert!(flipfx::oracle::exact_wate_single(&world, &SmoothWeight::Overlap).is_err());
}

#[test]
fn world_files_match_bundled_worlds() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../worlds");
    for name in bundled_names() {
        let world = bundled(name).unwrap();
        let spec = WorldSpec::from(&world);
        let text = spec.to_toml().unwrap();
        assert_eq!(WorldSpec::parse(&text).unwrap(), spec);
        let on_disk = WorldSpec::from_file(&dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(on_disk, spec, "worlds/{name}.toml is stale");
    }
}

#[test]
fn world_file_errors() {
    assert!(WorldSpec::parse("supports = [[0.0]]\nbogus = 1").is_err());
    let bad = "supports = [[0.0, 1.0]]\np_x1 = [0.5, 0.6]\npropensity = [[0.5, 0.5]]\noutcome_mean = [0.0, 0.0, 0.0, 0.0]";
    assert!(WorldSpec::parse(bad).unwrap().into_world().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_worlds_agree(
        p_x1 in 0.05f64..0.95,
        tr in prop::array::uniform4(0.05f64..0.95),
        pi1 in prop::array::uniform2(0.05f64..0.95),
        pi2 in prop::array::uniform8(0.05f64..0.95),
        mu in prop::array::uniform16(-3.0f64..3.0),
        bits in 0u8..4,
        k in 0.5f64..30.0,
    ) {
        let world = binary_t2(p_x1, tr, pi1, pi2, mu);
        let r = TargetRegime::new(vec![bits & 1, bits >> 1]).unwrap();
        let g = static_g_formula(&world, &r).unwrap();
        let one = exact_psi(&world, &r, &SmoothWeight::ConstantOne).unwrap();
        prop_assert!((g - one).abs() <= 1e-12);
        for w in SmoothWeight::catalog(k) {
            let back = exact_psi(&world, &r, &w).unwrap();
            let fwd = exact_psi_forward(&world, &r, &w).unwrap();
            let ipw = ipw_form_psi(&world, &r, &w).unwrap();
            prop_assert!((back - fwd).abs() <= 1e-12);
            prop_assert!((back - ipw).abs() <= 1e-12);
        }
    }
}
