//! Estimators fed by the engine, checked against baselines with known
//! statistics.

use wgqed::master::{CorrelationCurve, CurveSource};
use wgqed::stats::{awtd, compare_to_reference, g2_histogram, ks_two_sample, waiting_times, wtd, BinGeometry, ObservationWindow};
use wgqed::trajectory::run_ensemble;
use wgqed::{build_one_qubit, Channel, DetectionEvent, OneQubitParams, TrajectoryConfig, C64};

fn events_of(p: &OneQubitParams, t_end: f64, n_traj: u64, seed: u64) -> (Vec<DetectionEvent>, f64) {
    let m = build_one_qubit(p).unwrap();
    let dt = m.max_dt();
    let recs = run_ensemble(&m, &TrajectoryConfig::new(dt, t_end, seed), n_traj, &m.ground_state()).unwrap();
    (recs.into_iter().flat_map(|r| r.events).collect(), dt)
}

#[test]
fn poissonian_beam_has_flat_g2_and_exponential_wtd() {
    let p = OneQubitParams::new(1e-12, C64::new(1.0, 0.0), 0.0).unwrap();
    let t_end = 4.0e4;
    let (events, dt) = events_of(&p, t_end, 8, 3);
    let geometry = BinGeometry::snapped(0.5, 40, dt).unwrap();
    let window = ObservationWindow { burn_in: 0.0, t_end, n_trajectories: 8 };
    let g2 = g2_histogram(&events, Channel::Right, geometry, window).unwrap();
    let flat = CorrelationCurve { channel: Channel::Right, taus: vec![0.0, 1e3], values: vec![1.0, 1.0], stderr: None, bin_width: None, source: CurveSource::Analytic };
    let cmp = compare_to_reference(&g2, &flat).unwrap();
    assert!(cmp.fraction_within(3.0) >= 0.95 && cmp.max_abs_z() < 4.0, "{:?}", cmp.z);

    // Scaled WTD of a Poisson process is e^{−x}: W(0) → 1.
    let series = waiting_times(&events, Channel::Right, 0.0, dt).unwrap();
    let h = wtd(&series, 100, 4.0).unwrap();
    let (d0, s0) = (h.density()[0], h.stderr()[0]);
    let x0 = h.axis_bin_width();
    let expected = (1.0 - (-x0).exp()) / x0;
    assert!((d0 - expected).abs() < 3.0 * s0, "{d0} ± {s0} vs {expected}");

    // Adjacent waits are independent: no structure on the AWTD diagonal.
    assert!(series.adjacent_correlation().unwrap().abs() < 0.01);
    let a = awtd(&series, 20, 3.0).unwrap();
    assert!((a.total_probability() - 1.0).abs() < 1e-9);
}

#[test]
fn wtd_in_mean_units_is_invariant_under_time_rescaling() {
    // Doubling Γ and n̄ together leaves every dimensionless ratio unchanged.
    let slow = OneQubitParams::new(1.0, C64::new(1.0, 0.0), 0.0).unwrap();
    let fast = OneQubitParams::new(2.0, C64::new(2f64.sqrt(), 0.0), 0.0).unwrap();
    let scaled_waits = |p: &OneQubitParams, t_end: f64, seed: u64| {
        let (events, dt) = events_of(p, t_end, 4, seed);
        let series = waiting_times(&events, Channel::Left, 10.0 / p.gamma, dt).unwrap();
        let tb = series.mean().unwrap();
        series.waits().map(|w| w / tb).collect::<Vec<f64>>()
    };
    let a = scaled_waits(&slow, 5.0e4, 1);
    let b = scaled_waits(&fast, 2.5e4, 2);
    assert!(a.len() > 15_000 && b.len() > 15_000);
    let (_, pval) = ks_two_sample(&a, &b);
    assert!(pval > 0.01, "KS p = {pval}");
}
