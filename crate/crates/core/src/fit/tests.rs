use super::*;
use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const TRUTH: [f64; 3] = [1.2e6, 3e12, 0.35e-9];

fn taus() -> Vec<f64> {
    (-20..=20).map(|k| k as f64 * 0.1e-9).collect()
}

fn synthetic(kind: Observable, power: f64, halfwidth: f64, truth: [f64; 3], rel_sigma: f64) -> Dataset {
    let points = taus()
        .into_iter()
        .map(|t| {
            let p = DataPoint { taus: vec![t], value: 0.0, sigma: 1.0 };
            let v = predict(truth, &Dataset { pump_power_mw: power, coin_halfwidth: halfwidth, kind, points: vec![] }, &p).unwrap();
            DataPoint { taus: vec![t], value: v, sigma: rel_sigma * v }
        })
        .collect();
    Dataset { pump_power_mw: power, coin_halfwidth: halfwidth, kind, points }
}

fn noiseless() -> FitProblem {
    let datasets = [2.0, 8.0, 15.0]
        .iter()
        .map(|&p| synthetic(Observable::G2si, p, 0.39e-9, TRUTH, 0.01))
        .collect();
    FitProblem::new(datasets, Parameters::with_bandwidth(3e12))
}

#[test]
fn infer_examples() {
    let zero = [[0.0; 2]; 2];
    let (v, s) = infer_true_g2c0(1.428e7, 3e12, zero);
    assert_relative_eq!(v, 1.90e-5, max_relative = 5e-3);
    assert_eq!(s, 0.0);
    assert_relative_eq!(infer_true_g2c0(1.5e7, 3e12, zero).0, 2e-5, max_relative = 1e-2);
    assert_eq!(infer_true_g2c0(0.0, 3e12, zero), (0.0, 0.0));
    // 1 % on the rate gives ≈ 1 % on the inferred value
    let (v, s) = infer_true_g2c0(1.5e7, 3e12, [[(1.5e5f64).powi(2), 0.0], [0.0, 0.0]]);
    assert_relative_eq!(s / v, 1e-2, max_relative = 1e-3);
}

#[test]
fn noiseless_round_trip() {
    let r = fit(&noiseless()).unwrap();
    assert_relative_eq!(r.rate_per_mw.value, TRUTH[0], max_relative = 1e-3);
    assert_relative_eq!(r.tau_d.value, TRUTH[2], max_relative = 1e-3);
    assert_eq!(r.bandwidth.value, 3e12);
    assert!(!r.bandwidth.free && r.bandwidth.sigma == 0.0);
    assert!(r.chi2 < 1e-6, "chi2 = {}", r.chi2);
    assert_eq!(r.free, vec![Param::RatePerMw, Param::TauD]);
    assert_eq!(r.inferred.len(), 3);
    let (expected, _) = infer_true_g2c0(TRUTH[0] * 8.0, 3e12, [[0.0; 2]; 2]);
    assert_relative_eq!(r.infer_at(8.0).g2c0, expected, max_relative = 1e-3);
}

/// With 0.35 ns jitter the sub-ps correlation time barely touches the
/// windowed curves, so a free bandwidth is flagged rather than guessed.
#[test]
fn free_bandwidth_is_flagged_under_jitter() {
    let mut datasets: Vec<Dataset> = [2.0, 15.0]
        .iter()
        .map(|&p| synthetic(Observable::G2si, p, 0.39e-9, TRUTH, 0.01))
        .collect();
    datasets.push(synthetic(Observable::G2c, 15.0, 0.39e-9, TRUTH, 1e-3));
    let mut params = Parameters::with_bandwidth(3e12);
    params.bandwidth = ParamSpec::free(1e12, 1e10, 1e14);
    match fit(&FitProblem::new(datasets, params)) {
        Err(Error::NotIdentifiable { direction, .. }) => assert_eq!(direction, "bandwidth"),
        other => panic!("expected NotIdentifiable, got {other:?}"),
    }
}

#[test]
fn deterministic_and_json_round_trip() {
    let a = fit(&noiseless()).unwrap();
    let b = fit(&noiseless()).unwrap();
    assert_eq!(a, b);
    let back = FitResult::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(a.rate_per_mw, back.rate_per_mw);
    let problem = noiseless();
    assert_eq!(FitProblem::from_json(&problem.to_json().unwrap()).unwrap(), problem);
    let mut bumped: serde_json::Value = serde_json::from_str(&problem.to_json().unwrap()).unwrap();
    bumped["schema_version"] = 2.into();
    assert!(FitProblem::from_json(&bumped.to_string()).is_err());
    bumped["schema_version"] = 1.into();
    bumped["extra"] = 1.into();
    assert!(FitProblem::from_json(&bumped.to_string()).is_err());
}

#[test]
fn single_setting_is_not_identifiable() {
    let mut p = noiseless();
    p.datasets.truncate(1);
    assert!(matches!(fit(&p), Err(Error::NotIdentifiable { .. })));
    // same power and window twice is still one setting
    p.datasets.push(p.datasets[0].clone());
    assert!(matches!(fit(&p), Err(Error::NotIdentifiable { .. })));
}

/// Two powers but only the zero-delay point of a window much wider than the
/// jitter: every jitter value predicts the same numbers.
#[test]
fn wide_window_peak_leaves_jitter_flat() {
    let datasets = [2.0, 8.0]
        .iter()
        .map(|&p| {
            let mut d = synthetic(Observable::G2si, p, 5e-9, TRUTH, 0.01);
            d.points.retain(|q| q.taus[0] == 0.0);
            d
        })
        .collect();
    match fit(&FitProblem::new(datasets, Parameters::with_bandwidth(3e12))) {
        Err(Error::NotIdentifiable { direction, condition }) => {
            assert_eq!(direction, "tau_d");
            assert!(condition > MAX_CONDITION);
        }
        other => panic!("expected NotIdentifiable, got {other:?}"),
    }
}

#[test]
fn validation_errors() {
    let mut p = noiseless();
    p.datasets[0].pump_power_mw = 0.0;
    assert!(matches!(fit(&p), Err(Error::InvalidParameter { .. })));
    let mut p = noiseless();
    p.datasets[1].points[0].sigma = 0.0;
    assert!(fit(&p).is_err());
    let mut p = noiseless();
    p.params.tau_d.lower = 1e-9;
    p.params.tau_d.upper = 1e-10;
    assert!(fit(&p).is_err());
    let mut p = noiseless();
    p.params.rate_per_mw.free = false;
    p.params.tau_d.free = false;
    assert!(fit(&p).is_err());
}

#[test]
fn merge_sparse_keeps_five_counts() {
    // counts 0, 1, 4, 9, 0, 2: value n, σ = √n, so (value/σ)² = n
    let pts: Vec<CurvePoint> = [0.0, 1.0, 4.0, 9.0, 0.0, 2.0]
        .iter()
        .enumerate()
        .map(|(i, &n): (usize, &f64)| CurvePoint { x: i as f64, value: n, sigma: Some(n.sqrt()) })
        .collect();
    let m = merge_sparse(&pts);
    assert_eq!(m.len(), 2);
    assert_eq!(m[0].taus, vec![0.0, 1.0, 2.0]);
    assert_relative_eq!(m[0].value, 5.0 / 3.0);
    assert_relative_eq!(m[0].sigma, 5f64.sqrt() / 3.0);
    assert_eq!(m[1].taus, vec![3.0, 4.0, 5.0]);
    assert!(merge_sparse(&pts[..1]).is_empty());
}

#[test]
fn noisy_estimates_cover_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 50;
    let mut covered = [0usize; 2];
    for _ in 0..trials {
        let datasets = [2.0, 8.0, 15.0]
            .iter()
            .map(|&p| {
                let mut d = synthetic(Observable::G2si, p, 0.39e-9, TRUTH, 0.02);
                for q in &mut d.points {
                    q.value += Normal::new(0.0, q.sigma).unwrap().sample(&mut rng);
                }
                d
            })
            .collect();
        let r = fit(&FitProblem::new(datasets, Parameters::with_bandwidth(3e12))).unwrap();
        for (k, (p, t)) in [(Param::RatePerMw, TRUTH[0]), (Param::TauD, TRUTH[2])].into_iter().enumerate() {
            covered[k] += ((r.get(p).value - t).abs() <= 2.0 * r.get(p).sigma) as usize;
        }
    }
    eprintln!("2-sigma coverage {covered:?} of {trials}");
    for c in covered {
        assert!(c * 100 >= 95 * trials, "{covered:?}/{trials}");
    }
}
