//! The stochastic engine against exact results: closed-form conditional
//! evolution, Poisson/exponential statistics, the master equation, and the
//! determinism contract.

use std::f64::consts::{FRAC_PI_2, PI};

use wgqed::hilbert::evolve_nonhermitian;
use wgqed::master::{integrate_sampled, steady_state};
use wgqed::stats::{ks_test, waiting_times, wtd_with_geometry, BinGeometry};
use wgqed::trajectory::{average_density, conditional_state_analytics, run_ensemble, stream_ensemble};
use wgqed::model::jump_probability;
use wgqed::{build_one_qubit, build_two_qubit, Channel, DensityMatrix, Engine, Error, OneQubitParams, Scheme, StateVector, TrajectoryConfig, TrajectoryRecord, TwoQubitParams, C64};

fn params(alpha: f64, delta: f64) -> OneQubitParams {
    OneQubitParams::new(1.0, C64::new(alpha, 0.0), delta).unwrap()
}

fn no_jump_path(p: &OneQubitParams, psi0: &StateVector, dt: f64, steps: usize, scheme: Scheme) -> StateVector {
    let m = build_one_qubit(p).unwrap();
    let mut psi = psi0.clone();
    for _ in 0..steps {
        psi = evolve_nonhermitian(&m.h_eff, &psi, dt, scheme).unwrap().normalize().unwrap();
    }
    psi
}

/// Distance between two states up to a global phase.
fn ray_distance(a: &StateVector, b: &StateVector) -> f64 {
    1.0 - a.inner(b).unwrap().norm()
}

#[test]
fn no_jump_evolution_matches_closed_form() {
    let psi0 = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
    for p in [params(1.0, 0.0), params(0.7, 0.4), params(2.0, -1.3)] {
        let m = build_one_qubit(&p).unwrap();
        let mut psi = psi0.clone();
        for k in 1..=1000 {
            psi = evolve_nonhermitian(&m.h_eff, &psi, 0.01, Scheme::Exp).unwrap().normalize().unwrap();
            let exact = conditional_state_analytics(&p, &psi0, k as f64 * 0.01).unwrap();
            // Same phase convention: compare amplitudes directly.
            assert!(psi.max_abs_diff(&exact) < 1e-8, "t = {}: {}", k as f64 * 0.01, psi.max_abs_diff(&exact));
        }
    }
}

#[test]
fn euler_scheme_converges_at_first_order() {
    let p = params(1.0, 0.3);
    let psi0 = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
    let exact = conditional_state_analytics(&p, &psi0, 2.0).unwrap();
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| ray_distance(&no_jump_path(&p, &psi0, dt, (2.0 / dt).round() as usize, Scheme::Euler), &exact).sqrt())
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() < 0.2, "error ratio {ratio} ({errs:?})");
    }
}

/// Maps step-quantized waits back to continuous ones, `(k − 1 + U)·dt`, and
/// returns the exact exponential rate of a per-step probability `p`.
fn dequantize(waits: &[f64], dt: f64, seed: u64) -> Vec<f64> {
    let mut rng = wgqed::rng::TrajectoryRng::new(seed, u64::MAX);
    waits.iter().map(|w| ((w / dt).round() - 1.0 + rng.uniform()) * dt).collect()
}

#[test]
fn spontaneous_emission_times_are_exponential() {
    let p = params(0.0, 0.0);
    let m = build_one_qubit(&p).unwrap();
    let dt = 0.01;
    let t_max = 40.0;
    let engine = Engine::new(&m, TrajectoryConfig::new(dt, t_max, 17)).unwrap();
    let excited = StateVector::basis(2, 1);
    let n = 100_000;
    let (mut times, mut left) = (Vec::with_capacity(n), 0usize);
    for id in 0..n as u64 {
        let mut traj = engine.trajectory(id, &excited).unwrap();
        while traj.time() < t_max {
            if let Some(ch) = traj.step().unwrap() {
                times.push(traj.time());
                left += usize::from(ch == Channel::Left);
                // After the photon the qubit sits in |g⟩ and stays dark.
                assert_eq!(traj.state().amps()[1], C64::new(0.0, 0.0));
                break;
            }
        }
    }
    assert!(times.len() as f64 > n as f64 * (1.0 - 1e-12));
    // Per-step probability Γdt ⇒ geometric steps ⇒ exponential with this rate.
    let rate = -(1.0 - p.gamma * dt).ln() / dt;
    let (_, pval) = ks_test(&dequantize(&times, dt, 1), |x| 1.0 - (-rate * x).exp());
    assert!(pval > 0.01, "KS p = {pval}");
    let frac = left as f64 / times.len() as f64;
    assert!((frac - 0.5).abs() < 0.005, "left fraction {frac}");
}

#[test]
fn transmitted_detections_kick_the_qubit_up() {
    let m = build_one_qubit(&params(1.0, 0.0)).unwrap();
    let engine = Engine::new(&m, TrajectoryConfig::new(0.01, 0.0, 12)).unwrap();
    // Fixed point of the no-jump ratio c_e/c_g at Δ = 0.
    let fixed = C64::new(0.0, -(2.0f64).sqrt() / (2.0 * PI).sqrt());
    let (mut up, mut near, mut total) = (0, 0, 0);
    for id in 0..4 {
        let mut traj = engine.trajectory(id, &m.ground_state()).unwrap();
        while traj.time() < 5000.0 {
            let pre = traj.state();
            let ratio = pre.amps()[1] / pre.amps()[0];
            if traj.step().unwrap() == Some(Channel::Right) && traj.time() > 10.0 {
                total += 1;
                if (ratio - fixed).norm() < 0.1 * fixed.norm() {
                    near += 1;
                    up += usize::from(traj.population_sample().excited[0] > pre.excited_populations()[0]);
                }
            }
        }
    }
    assert!(near > 200 && near as f64 > 0.2 * total as f64, "{near}/{total}");
    assert!(up as f64 > 0.9 * near as f64, "{up}/{near}");
}

#[test]
fn euler_norm_loss_equals_jump_probability() {
    let m = build_one_qubit(&params(1.0, 0.2)).unwrap();
    let psi = StateVector::new(vec![C64::new(0.6, 0.1), C64::new(0.2, 0.7)]).unwrap().normalize().unwrap();
    for dt in [1e-2, 1e-3] {
        let evolved = evolve_nonhermitian(&m.h_eff, &psi, dt, Scheme::Euler).unwrap();
        let p: f64 = Channel::BOTH.iter().map(|&c| jump_probability(&m, &psi, c, dt).unwrap()).sum();
        let loss = 1.0 - evolved.norm_sqr();
        assert!((loss - p).abs() < 2.0 * dt * dt, "dt = {dt}: {loss} vs {p}");
    }
    // Pure loss: the norm shrinks monotonically.
    let undriven = build_one_qubit(&params(0.0, 0.0)).unwrap();
    let propagator = Scheme::Exp.propagator(&undriven.h_eff, 0.01);
    let mut x = psi.clone();
    let mut last = 1.0;
    for _ in 0..100 {
        x = propagator.apply(&x).unwrap();
        let n = x.norm_sqr();
        assert!(n < last);
        last = n;
    }
}

#[test]
fn left_detection_from_two_qubit_dark_state_has_zero_probability() {
    let m = build_two_qubit(&TwoQubitParams::identical(1.0, C64::new(1.0, 0.0), FRAC_PI_2).unwrap()).unwrap();
    let s = 0.5f64.sqrt();
    let dark = StateVector::new(vec![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0)]).unwrap();
    assert_eq!(jump_probability(&m, &dark, Channel::Left, 0.01).unwrap(), 0.0);
}

#[test]
fn decoupled_qubit_sees_poissonian_input() {
    // Γ → 0: the transmitted channel carries the bare coherent beam.
    let p = OneQubitParams::new(1e-12, C64::new(1.0, 0.0), 0.0).unwrap();
    let m = build_one_qubit(&p).unwrap();
    let nbar = 1.0 / (2.0 * PI);
    let dt = m.max_dt();
    let cfg = TrajectoryConfig::new(dt, 6.0e4, 5);
    let recs = run_ensemble(&m, &cfg, 12, &m.ground_state()).unwrap();
    let events: Vec<_> = recs.iter().flat_map(|r| r.events.iter().copied()).collect();
    let series = waiting_times(&events, Channel::Right, 0.0, dt).unwrap();
    assert!(series.len() > 100_000, "{}", series.len());
    let waits: Vec<f64> = series.waits().collect();
    let rate = -(1.0 - nbar * dt).ln() / dt;
    let (_, pval) = ks_test(&dequantize(&waits, dt, 2), |x| 1.0 - (-rate * x).exp());
    assert!(pval > 0.01, "KS p = {pval}");
    // A renewal process: adjacent waits are uncorrelated.
    assert!(series.adjacent_correlation().unwrap().abs() < 0.01);
    assert!(events.iter().all(|e| e.channel == Channel::Right));
}

fn ensemble_records(threads: usize) -> Vec<TrajectoryRecord> {
    let m = build_one_qubit(&params(1.0, 0.0)).unwrap();
    let cfg = TrajectoryConfig { population_stride: Some(100), ..TrajectoryConfig::new(0.01, 200.0, 99) };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_ensemble(&m, &cfg, 24, &m.ground_state())).unwrap()
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let a = ensemble_records(1);
    let b = ensemble_records(3);
    assert_eq!(a, b);
    assert!(a.iter().enumerate().all(|(i, r)| r.trajectory_id == i as u64));
}

#[test]
fn streaming_matches_batch_execution() {
    let m = build_one_qubit(&params(1.0, 0.0)).unwrap();
    let cfg = TrajectoryConfig::new(0.01, 100.0, 4);
    let batch = run_ensemble(&m, &cfg, 10, &m.ground_state()).unwrap();
    let engine = Engine::new(&m, cfg).unwrap();
    let mut streamed = Vec::new();
    stream_ensemble::<Error>(&engine, 0..10, 3, &m.ground_state(), |r| {
        streamed.push(r);
        Ok(())
    })
    .unwrap();
    assert_eq!(batch, streamed);
}

#[test]
fn sharded_histograms_merge_to_the_single_run() {
    let m = build_one_qubit(&params(1.0, 0.0)).unwrap();
    let dt = 0.01;
    let engine = Engine::new(&m, TrajectoryConfig::new(dt, 400.0, 8)).unwrap();
    let geometry = BinGeometry::new(dt, 20, 80).unwrap();
    let hist_of = |ids: std::ops::Range<u64>| {
        let events: Vec<_> = ids.flat_map(|i| engine.run(i, &m.ground_state()).unwrap().events).collect();
        wtd_with_geometry(&waiting_times(&events, Channel::Left, 10.0, dt).unwrap(), geometry).unwrap()
    };
    let whole = hist_of(0..12);
    let merged = hist_of(0..5).merge(&hist_of(5..9)).unwrap().merge(&hist_of(9..12)).unwrap();
    assert_eq!(whole, merged);
    assert_eq!(whole.density(), merged.density());
}

#[test]
fn mean_wait_matches_steady_flux() {
    let m = build_one_qubit(&params(1.0, 0.0)).unwrap();
    let dt = 0.01;
    let recs = run_ensemble(&m, &TrajectoryConfig::new(dt, 2.0e4, 21), 4, &m.ground_state()).unwrap();
    let events: Vec<_> = recs.iter().flat_map(|r| r.events.iter().copied()).collect();
    let rho = steady_state(&m.generator).unwrap();
    for ch in Channel::BOTH {
        let series = waiting_times(&events, ch, 10.0, dt).unwrap();
        let h = wtd_with_geometry(&series, BinGeometry::new(dt, 10, 10).unwrap()).unwrap();
        let (tb, se) = (h.mean_wait().unwrap(), h.moments.mean_stderr(dt).unwrap());
        let expected = 1.0 / rho.jump_rate(m.jump(ch));
        // Waits within a trajectory are correlated only over a few τ̄; allow 4σ.
        assert!((tb - expected).abs() < 4.0 * se, "{ch}: τ̄ = {tb} ± {se}, expected {expected}");
        assert!(series.waits().all(|w| w > 0.0));
    }
}

#[test]
fn trajectory_average_reproduces_master_evolution() {
    let m = build_one_qubit(&params(1.0, 0.0)).unwrap();
    let times = [0.5, 1.0, 2.0, 4.0];
    let engine = Engine::new(&m, TrajectoryConfig::new(0.01, 4.0, 3)).unwrap();
    let n = 4000;
    let avg = average_density(&engine, n, &m.ground_state(), &times).unwrap();
    let exact = integrate_sampled(&m.generator, &DensityMatrix::pure(&m.ground_state()), &times, 0.01).unwrap();
    for (a, e) in avg.iter().zip(&exact) {
        // Entries are bounded by 1/2 in magnitude, so σ ≤ 0.5/√N.
        assert!(a.max_abs_diff(e) < 4.0 * 0.5 / (n as f64).sqrt(), "{}", a.max_abs_diff(e));
        assert!((a.trace() - 1.0).abs() < 1e-12);
    }
}
