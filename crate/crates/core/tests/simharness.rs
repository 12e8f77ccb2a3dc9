use std::path::Path;

use flipfx::rng;
use flipfx::simharness::{
    generate_dgp, replicate, run_coverage_grid, true_psi_dgp, true_treatment_mean_dgp,
    write_cells_csv, write_long_csv, CellSpec, CorruptedDgpNuisance, Dgp, ExperimentConfig,
    NoiseSpec,
};
use flipfx::weights::{FlipWeight, SmoothWeight, TargetRegime};
use rand::Rng;

/// Monte Carlo of the flip mechanism on the design, drawing the natural
/// treatment and the flip event separately. Returns mean, se and `E[D_1]`.
fn mc_flip(dgp: &Dgp, regime: &TargetRegime, w: &SmoothWeight<f64>, n: usize, seed: u64) -> (f64, f64, f64) {
    let mut r = rng::stream(seed, &[77]);
    let (mut s, mut s2, mut d1) = (0.0, 0.0, 0.0);
    let draw = |u: f64, target: u8, r: &mut rng::StreamRng| -> u8 {
        let pi1 = dgp.propensity(u);
        let natural = u8::from(r.random::<f64>() < pi1);
        let p = if target == 1 { pi1 } else { 1.0 - pi1 };
        if natural != target && r.random::<f64>() < w.eval(p) {
            target
        } else {
            natural
        }
    };
    for _ in 0..n {
        let x1: f64 = r.random();
        let a1 = draw(x1, regime.at(1), &mut r);
        let x2 = (x1 + f64::from(a1)) / 2.0;
        let a2 = draw(x2, regime.at(2), &mut r);
        let y = x1 + x2 + f64::from(a1) + f64::from(a2);
        s += y;
        s2 += y * y;
        d1 += f64::from(a1);
    }
    let nf = n as f64;
    let mean = s / nf;
    (mean, ((s2 / nf - mean * mean) / nf).sqrt(), d1 / nf)
}

#[test]
fn quadrature_truth_matches_monte_carlo() {
    let trim = SmoothWeight::smooth_trim(10.0).unwrap();
    let cases = [
        (Dgp::positivity_repaired(0.1), "11", trim, 10_000_000),
        (Dgp::positivity_repaired(0.1), "00", SmoothWeight::ConstantOne, 1_000_000),
        (Dgp::default(), "11", SmoothWeight::Overlap, 1_000_000),
        (Dgp::default(), "01", trim, 1_000_000),
    ];
    for (k, (dgp, r, w, n)) in cases.into_iter().enumerate() {
        let r: TargetRegime = r.parse().unwrap();
        let truth = true_psi_dgp(&dgp, &r, &w).unwrap();
        let (mean, se, d1) = mc_flip(&dgp, &r, &w, n, k as u64);
        assert!((mean - truth).abs() <= 4.0 * se, "{r} {w}: mc {mean} vs {truth} (se {se})");
        let d1_truth = true_treatment_mean_dgp(&dgp, &r, &w, 1).unwrap();
        let d1_se = (d1_truth * (1.0 - d1_truth) / n as f64).sqrt().max(1e-9);
        assert!((d1 - d1_truth).abs() <= 4.0 * d1_se, "{r} {w}: D1 {d1} vs {d1_truth}");
    }
}

#[test]
fn corruption_hits_the_requested_rate() {
    let sim = generate_dgp(&Dgp::default(), 5000, 4).unwrap();
    for (ap, am) in [(0.1, 0.5), (0.25, 0.25), (0.5, 0.1)] {
        let nz = CorruptedDgpNuisance::new(Dgp::default(), &sim, NoiseSpec::new(ap, am).unwrap(), 9).unwrap();
        let (rp, rm) = nz.corruption_rmse();
        for (got, a) in [(rp, ap), (rm, am)] {
            let want = 2f64.sqrt() * 5000f64.powf(-a);
            assert!((got - want).abs() <= 0.25 * want, "rate {a}: {got} vs {want}");
        }
    }
    assert!(NoiseSpec::new(0.0, 0.5).is_err());
    assert!(NoiseSpec::new(0.5, 1.5).is_err());
}

#[test]
fn replication_is_reproducible() {
    let cfg = ExperimentConfig { replications: 3, ..ExperimentConfig::default() };
    let cell = CellSpec { alpha_pi: 0.25, alpha_m: 0.5, n: 800 };
    let a = replicate(&cfg, &cell, 2).unwrap();
    let b = replicate(&cfg, &cell, 2).unwrap();
    assert_eq!(a, b);
    let c = replicate(&cfg, &cell, 1).unwrap();
    assert_ne!(a.estimate, c.estimate);
    assert!(a.ci_low < a.estimate && a.estimate < a.ci_high);
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        cells: Some(vec![
            CellSpec { alpha_pi: 0.5, alpha_m: 0.5, n: 400 },
            CellSpec { alpha_pi: 0.25, alpha_m: 0.1, n: 300 },
        ]),
        replications: 6,
        seed: 99,
        ..ExperimentConfig::default()
    }
}

#[test]
fn grid_is_identical_across_worker_counts() {
    let cfg = small_config();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_coverage_grid(&cfg).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one, three);
    assert_eq!(one, run_coverage_grid(&cfg).unwrap());
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_cells_csv(&one, &mut a).unwrap();
    write_cells_csv(&three, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_outputs() {
    let cells = run_coverage_grid(&small_config()).unwrap();
    let mut wide = Vec::new();
    write_cells_csv(&cells, &mut wide).unwrap();
    let wide = String::from_utf8(wide).unwrap();
    assert_eq!(wide.lines().count(), 3);
    let mut long = Vec::new();
    write_long_csv(&cells, &mut long).unwrap();
    let long = String::from_utf8(long).unwrap();
    assert_eq!(long.lines().next().unwrap(), "rate_row,rate_col,n,coverage,se");
    assert_eq!(long.lines().count(), 3);
}

#[test]
fn bundled_config_is_the_default_grid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/appendixB.toml");
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.cell_specs().len(), 27);
}

#[test]
fn error_shrinks_at_root_n() {
    let cfg = ExperimentConfig {
        cells: Some(vec![
            CellSpec { alpha_pi: 0.5, alpha_m: 0.5, n: 1000 },
            CellSpec { alpha_pi: 0.5, alpha_m: 0.5, n: 4000 },
        ]),
        replications: 200,
        seed: 5,
        ..ExperimentConfig::default()
    };
    let cells = run_coverage_grid(&cfg).unwrap();
    assert!(cells.iter().all(|c| c.failures == 0), "{}", cells[0].first_error);
    let shrink = cells[0].mean_abs_error / cells[1].mean_abs_error;
    assert!(shrink >= 1.7, "error shrank by {shrink}");
}
