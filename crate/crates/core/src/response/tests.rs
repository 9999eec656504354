use super::*;
use approx::assert_relative_eq;

const TAU_D: f64 = 0.35e-9;
const TAU_COIN: f64 = 0.39e-9;

fn source(pump_mw: f64) -> SpdcParams {
    SpdcParams::from_pump(1.2e6, pump_mw, 3e12).unwrap()
}

fn reference(mode: EvalMode) -> Response {
    Response::new(
        source(11.9),
        DetectorModel::reference(),
        CoincidenceConfig::new(TAU_COIN).unwrap(),
    )
    .with_mode(mode)
}

fn midpoint<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Window average of the doubly-jittered pair rate, by brute-force nested
/// midpoint sums straight from the defining integrals.
fn n_si_oracle(p: &SpdcParams, tau_d: f64, tau_coin: f64, tau: f64) -> f64 {
    let u = |t: f64| if t.abs() <= tau_d { 0.5 / tau_d } else { 0.0 };
    let b = 0.5 / p.bandwidth();
    let excess = midpoint(
        |tp| {
            midpoint(
                |s| {
                    model::cross_corr_sq(p, s)
                        * midpoint(|ti| u(ti) * u(s + ti - tp), -tau_d, tau_d, 400)
                },
                -b,
                b,
                8,
            )
        },
        tau - tau_coin,
        tau + tau_coin,
        400,
    ) / (2.0 * tau_coin);
    p.pair_rate() * p.pair_rate() + excess
}

#[test]
fn n_si_matches_brute_force_quadrature() {
    let resp = reference(EvalMode::Exact);
    for &tau in &[0.0, 0.3e-9, 0.8e-9] {
        let oracle = n_si_oracle(&resp.source, TAU_D, TAU_COIN, tau);
        assert_relative_eq!(resp.n_si(tau), oracle, max_relative = 2e-3);
    }
}

#[test]
fn reference_peak_value_frozen() {
    // Oracle value 73.2: the jitter triangle (half-width 0.7 ns) leaks 19.6 %
    // of the excess outside a 0.78 ns window.
    let resp = reference(EvalMode::Exact);
    let oracle = n_si_oracle(&resp.source, TAU_D, TAU_COIN, 0.0);
    let r = resp.source.pair_rate();
    let g_oracle = oracle / (r * r);
    assert_relative_eq!(g_oracle, 73.2, max_relative = 5e-3);
    assert_relative_eq!(resp.g2bar_si(0.0), g_oracle, max_relative = 2e-3);
}

#[test]
fn plateau_when_window_exceeds_jitter() {
    let c = CoincidenceConfig::new(5e-9).unwrap();
    let resp = Response::new(source(11.9), DetectorModel::reference(), c);
    let r = resp.source.pair_rate();
    let expect = r * r + r / (2.0 * 5e-9);
    assert_relative_eq!(resp.n_si(0.0), expect, max_relative = 0.02);
    // flat top on [-τc + Δt + 2τd, τc - Δt - 2τd]
    let edge = 5e-9 - 1.0 / 3e12 - 2.0 * TAU_D;
    assert_relative_eq!(resp.n_si(edge), resp.n_si(0.0), max_relative = 1e-12);
}

#[test]
fn pbar_delta_jitter_is_pair_rate() {
    let d = DetectorModel::reference().with_jitter(0.0);
    let p = source(11.9);
    for k in -40..=40 {
        let tau = k as f64 * 1e-14;
        assert_relative_eq!(pbar_si(&p, &d, tau), model::pair_rate_fn(&p, tau), max_relative = 1e-12);
    }
    assert_relative_eq!(pbar_si(&p, &DetectorModel::reference(), 5e-9), 1.428e7 * 1.428e7, max_relative = 1e-12);
}

#[test]
fn convolutions_conserve_excess_area() {
    for mode in [EvalMode::Exact, EvalMode::Delta] {
        let resp = reference(mode);
        let r = resp.source.pair_rate();
        let floor = r * r;
        let span = 2.0 * TAU_D + TAU_COIN + 1e-12;
        let mut cuts = vec![0.0];
        for s in [-1.0, 1.0] {
            for e in [2.0 * TAU_D, 2.0 * TAU_D + TAU_COIN, 2.0 * TAU_D - TAU_COIN, TAU_COIN] {
                cuts.push(s * e);
            }
        }
        let pbar_area = quad::integrate_pieces(|t| resp.pbar_si(t) - floor, &cuts, -span, span, 16);
        assert_relative_eq!(pbar_area, r, max_relative = 1e-6);
        let n_area = quad::integrate_pieces(|t| resp.n_si(t) - floor, &cuts, -span, span, 16);
        assert_relative_eq!(n_area, r, max_relative = 1e-6);
    }
}

#[test]
fn excess_fwhm_is_twice_the_jitter() {
    let resp = reference(EvalMode::Exact);
    let floor = resp.source.pair_rate().powi(2);
    let peak = resp.pbar_si(0.0) - floor;
    // bisect the half-maximum crossing on the positive side
    let (mut lo, mut hi) = (0.0, 2.0 * TAU_D);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if resp.pbar_si(mid) - floor > 0.5 * peak {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert_relative_eq!(2.0 * lo, 0.7e-9, max_relative = 1e-3);
}

#[test]
fn g2bar_si_floor_and_pump_scaling() {
    let resp = reference(EvalMode::Delta);
    assert_relative_eq!(resp.g2bar_si(20e-9), 1.0, max_relative = 1e-12);
    let double = Response { source: source(23.8), ..resp };
    let ratio = (resp.g2bar_si(0.0) - 1.0) / (double.g2bar_si(0.0) - 1.0);
    assert_relative_eq!(ratio, 2.0, max_relative = 0.02);
}

#[test]
fn modes_agree_at_reference_parameters() {
    let exact = reference(EvalMode::Exact);
    let delta = reference(EvalMode::Delta);
    for &tau in &[0.0, 0.2e-9, 0.5e-9, 1.0e-9, 5e-9] {
        assert_relative_eq!(exact.n_si(tau), delta.n_si(tau), max_relative = 1e-3);
        assert_relative_eq!(exact.n2_si(tau), delta.n2_si(tau), max_relative = 1e-3);
        assert_relative_eq!(exact.g2bar_c(tau), delta.g2bar_c(tau), max_relative = 1e-3);
    }
}

#[test]
fn degenerate_limits_recover_model() {
    let p = source(11.9);
    let resp = Response::new(
        p,
        DetectorModel::reference().with_jitter(0.0),
        CoincidenceConfig { coin_halfwidth: 1e-16 },
    )
    .with_mode(EvalMode::Exact);
    let r = p.pair_rate();
    let wide: Vec<f64> = (0..200).map(|k| -5e-9 + 10e-9 * k as f64 / 199.0).collect();
    let narrow: Vec<f64> = (0..200).map(|k| -1e-12 + 2e-12 * k as f64 / 199.0).collect();
    for &tau in wide.iter().chain(&narrow) {
        assert_relative_eq!(resp.n_si(tau), model::pair_rate_fn(&p, tau), max_relative = 1e-6);
        assert_relative_eq!(resp.g2bar_si(tau), model::g2_si(&p, tau), max_relative = 1e-6);
        let g = resp.g2bar_c(tau);
        assert_relative_eq!(g, model::g2_cond(&p, 0.0, tau, 0.0), max_relative = 1e-6);
        let n2 = resp.n2_si(tau);
        assert_relative_eq!(n2, model::triple_rate_fn(&p, 0.0, tau, 0.0), max_relative = 1e-6);
    }
    // ideal peak/wall ratio
    assert_relative_eq!(resp.peak_to_wall(5e-9), 4.0, max_relative = 1e-3);
    let _ = r;
}

#[test]
fn time_averaged_peak_to_wall_is_about_two() {
    let ratio = reference(EvalMode::Delta).peak_to_wall(10e-9);
    assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn dip_below_three_percent_and_unit_tail() {
    let resp = reference(EvalMode::Delta);
    let g0 = resp.g2bar_c(0.0);
    assert!(g0 < 0.03 && g0 > 0.0, "ḡ_c(0) = {g0}");
    assert_relative_eq!(resp.g2bar_c(30e-9), 1.0, max_relative = 1e-3);
    assert_relative_eq!(resp.g2bar_c(-30e-9), 1.0, max_relative = 1e-3);
    assert_relative_eq!(resp.g2bar_c(0.4e-9), resp.g2bar_c(-0.4e-9), max_relative = 1e-9);
}

#[test]
fn dip_width_tracks_window() {
    // the half-level width follows 2τ_coin only once the window is wide
    // compared with the jitter tails
    for &tau_coin in &[2.5e-9, 3.0e-9, 5.0e-9, 8.0e-9] {
        let resp = Response::new(
            source(11.9),
            DetectorModel::reference(),
            CoincidenceConfig::new(tau_coin).unwrap(),
        );
        let min = resp.g2bar_c(0.0);
        let level = 0.5 * (1.0 + min);
        let (mut lo, mut hi) = (0.0, 10.0 * tau_coin + 4.0 * TAU_D);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if resp.g2bar_c(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let width = 2.0 * lo;
        assert!(
            (width / (2.0 * tau_coin) - 1.0).abs() <= 0.2,
            "τ_coin {tau_coin:e}: width {width:e}"
        );
    }
}

#[test]
fn dip_is_linear_in_pump() {
    let d = DetectorModel::reference();
    let c = CoincidenceConfig::new(TAU_COIN).unwrap();
    let powers: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let grid = SweepGrid::Pump {
        rate_per_mw: 1.2e6,
        bandwidth: 3e12,
        powers_mw: powers.clone(),
        coincidence: c,
    };
    let curve = g2bar_c_zero_sweep(&grid, &d, EvalMode::Delta).unwrap();
    let slope = curve.points.iter().map(|p| p.x * p.value).sum::<f64>()
        / curve.points.iter().map(|p| p.x * p.x).sum::<f64>();
    for p in &curve.points {
        assert_relative_eq!(p.value, slope * p.x, max_relative = 0.05);
    }
    // pump → 0 drives the dip to zero
    let tiny = Response::new(SpdcParams::from_pump(1.2e6, 1e-6, 3e12).unwrap(), d, c);
    assert!(tiny.g2bar_c(0.0) < 1e-8);
}

#[test]
fn window_sweep_ordering() {
    let widths: Vec<f64> = (0..40).map(|k| 0.25e-9 * (1.1f64).powi(k)).collect();
    let sweep = |tau_d: f64| {
        g2bar_c_zero_sweep(
            &SweepGrid::Window {
                source: source(11.9),
                halfwidths: widths.clone(),
            },
            &DetectorModel::reference().with_jitter(tau_d),
            EvalMode::Delta,
        )
        .unwrap()
    };
    let real = sweep(TAU_D);
    let ideal = sweep(0.0);
    for w in real.points.windows(2) {
        assert!(w[1].value >= w[0].value, "non-monotone at {:e}", w[1].x);
    }
    for (a, b) in ideal.points.iter().zip(&real.points) {
        if a.x < 2.0 * TAU_D - 0.01e-9 {
            assert!(a.value < b.value, "ideal above real at {:e}", a.x);
        } else {
            // window swallows the whole ±2τ_d jitter triangle
            assert!((a.value - b.value).abs() <= 1e-6 * b.value, "at {:e}", a.x);
        }
    }
    // monotone in τ_d at fixed window
    let c = CoincidenceConfig::new(TAU_COIN).unwrap();
    let mut prev = 0.0;
    for k in 0..10 {
        let d = DetectorModel::reference().with_jitter(k as f64 * 0.1e-9);
        let g = Response::new(source(11.9), d, c).g2bar_c(0.0);
        assert!(g >= prev * (1.0 - 1e-6), "τ_d {:e}: {g:e} < {prev:e}", k as f64 * 0.1e-9);
        prev = g;
    }
}

#[test]
fn empty_sweep_is_an_error() {
    let grid = SweepGrid::Window {
        source: source(1.0),
        halfwidths: vec![],
    };
    assert!(matches!(
        g2bar_c_zero_sweep(&grid, &DetectorModel::reference(), EvalMode::Delta),
        Err(Error::EmptyGrid)
    ));
}

#[test]
fn detector_and_window_validation() {
    assert!(DetectorModel::new(-1.0, 0.4, 0.0, 1e-12).is_err());
    assert!(DetectorModel::new(0.0, 0.0, 0.0, 1e-12).is_err());
    assert!(DetectorModel::new(0.0, 1.0, 0.0, 0.0).is_err());
    assert!(CoincidenceConfig::new(0.0).is_err());
    assert!(!CoincidenceConfig::new(20e-9).unwrap().in_apparatus_range());
    assert!(CoincidenceConfig::from_full_width(0.78e-9).unwrap().in_apparatus_range());
}
