use flipfx::estimators::{estimate, EstimatorConfig, Method};
use flipfx::nuisance::{Backend, Design, Functional, LearnedNuisance, Response};
use flipfx::simharness::{generate_dgp, Dgp};
use flipfx::stats;
use flipfx::weights::SmoothWeight;

#[test]
fn learned_nuisances_on_the_design() {
    let sim = generate_dgp(&Dgp::default(), 10_000, 12).unwrap();
    let provider = LearnedNuisance {
        propensity_backend: Backend::Tree { depth: 4 },
        regression_backend: Backend::Linear,
    };
    let cfg = EstimatorConfig { folds: 2, seed: 3, ..EstimatorConfig::default() };
    let w = SmoothWeight::smooth_trim(10.0).unwrap();
    let est = estimate(&sim.data, &"11".parse().unwrap(), &w, Functional::Outcome, Method::Sdr, &provider, &cfg)
        .unwrap();
    let set = &est.nuisances;

    for t in 0..2 {
        let truth: Vec<f64> = sim.pi.iter().map(|p| p[t]).collect();
        let constant = vec![stats::mean(&truth); truth.len()];
        let tree = stats::rmse(&set.pi_hat[t], &truth);
        let base = stats::rmse(&constant, &truth);
        assert!(tree < 0.5 * base, "t={}: tree {tree} vs constant {base}", t + 1);
    }

    // The outcome model is linear in (x1, x2, a1, a2), so OLS recovers it.
    let mut fitted = Vec::new();
    let mut truth = Vec::new();
    for i in 0..sim.data.n() {
        let tr = sim.data.trajectory(i);
        for b in 0..=1u8 {
            fitted.push(set.m_hat[1][i][b as usize]);
            truth.push(Dgp::outcome_mean(tr.covariates[0][0], tr.treatments[0], b));
        }
    }
    let err = stats::rmse(&fitted, &truth);
    assert!(err < 0.05, "m2 rmse {err}");

    // clipping at the default bound
    for p in set.pi_hat.iter().flatten() {
        assert!((0.01..=0.99).contains(p));
    }
}

#[test]
fn separable_points_clip_instead_of_diverging() {
    let x = Design::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
    let y = [0.0, 0.0, 1.0, 1.0];
    let model = Backend::Logistic.fit(&x, &y, Response::Binary).unwrap();
    let p = model.predict_all(&x);
    assert!(p.iter().all(|v| v.is_finite()));
    assert!(p[0] < 0.5 && p[3] > 0.5);
    let clipped: Vec<f64> = p.iter().map(|&v| flipfx::nuisance::clip_probability(v, 0.01)).collect();
    assert!(clipped.iter().all(|v| (0.01..=0.99).contains(v)));
}

#[test]
fn backends_beat_the_mean_on_a_single_index_model() {
    let n = 2000;
    let mut r = flipfx::rng::stream(42, &[1]);
    use rand::Rng;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 4.0 - 2.0, r.random::<f64>()]).collect();
    let signal: Vec<f64> = rows.iter().map(|x| 1.0 / (1.0 + (-1.5 * x[0] + 0.5 * x[1]).exp())).collect();
    let y: Vec<f64> = signal.iter().map(|&p| f64::from(u8::from(r.random::<f64>() < p))).collect();
    let x = Design::from_rows(&rows);
    let base = stats::rmse(&vec![stats::mean(&y); n], &signal);
    for b in [Backend::Linear, Backend::Logistic, Backend::Knn { k: 50 }, Backend::Tree { depth: 4 }, Backend::Ensemble] {
        let fit = b.fit(&x, &y, Response::Binary).unwrap();
        let err = stats::rmse(&fit.predict_all(&x), &signal);
        assert!(err < 0.6 * base, "{b:?}: {err} vs constant {base}");
    }
}
