//! Monte-Carlo quantum-jump engine.
//!
//! Per step of length `dt` the conditional state `ψ` is tested for a
//! detection with probabilities `P_R = dt⟨J_R†J_R⟩`, `P_L = dt⟨J_L†J_L⟩`
//! against one uniform variate `r`: `r < P_R` collapses on the right channel,
//! `P_R ≤ r < P_R + P_L` on the left, otherwise ψ follows the no-jump
//! evolution and is renormalized. At most one detection per step; events are
//! stamped with the end time of their step.

use std::ops::Range;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{excited_populations, matvec_into, quad_form, DensityMatrix, Operator, Scheme, StateVector};
use crate::model::{Channel, ModelOperators, OneQubitParams, DARK_COLLAPSE_NORM_SQR, MAX_STEP_PROBABILITY};
use crate::rng::TrajectoryRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionEvent {
    pub trajectory_id: u64,
    pub time: f64,
    pub channel: Channel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Record excited-state populations every this many steps.
    pub population_stride: Option<u64>,
    pub master_seed: u64,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, t_end: f64, master_seed: u64) -> Self {
        Self { dt, t_end, scheme: Scheme::Exp, population_stride: None, master_seed }
    }

    pub fn validate(&self, m: &ModelOperators) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        let limit = m.max_dt();
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "dt = {} exceeds 0.01·min(1/Γ, 1/n̄, 1/(g|α|)) = {limit:.4e}",
                self.dt
            )));
        }
        if self.population_stride == Some(0) {
            return Err(Error::invalid("population stride must be at least 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt + 1e-9).floor() as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSample {
    pub time: f64,
    /// Excited-state probability of each qubit.
    pub excited: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_id: u64,
    pub events: Vec<DetectionEvent>,
    pub population_samples: Vec<PopulationSample>,
    pub final_state: StateVector,
}

/// Precomputed per-step operators, shared read-only by all trajectories.
#[derive(Clone, Debug)]
pub struct Engine<'m> {
    model: &'m ModelOperators,
    cfg: TrajectoryConfig,
    propagator: Vec<C64>,
    jump_right: Vec<C64>,
    jump_left: Vec<C64>,
    rate_right: Vec<C64>,
    rate_left: Vec<C64>,
}

impl<'m> Engine<'m> {
    pub fn new(model: &'m ModelOperators, cfg: TrajectoryConfig) -> Result<Self> {
        cfg.validate(model)?;
        let propagator = cfg.scheme.propagator(&model.h_eff, cfg.dt).data().to_vec();
        Ok(Self {
            model,
            propagator,
            jump_right: model.j_right.data().to_vec(),
            jump_left: model.j_left.data().to_vec(),
            rate_right: model.detection_rate_operator(Channel::Right).data().to_vec(),
            rate_left: model.detection_rate_operator(Channel::Left).data().to_vec(),
            cfg,
        })
    }

    pub fn model(&self) -> &ModelOperators {
        self.model
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.cfg
    }

    pub fn trajectory(&self, trajectory_id: u64, psi0: &StateVector) -> Result<Trajectory<'_, 'm>> {
        if psi0.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch { expected: self.model.dim(), found: psi0.dim() });
        }
        if (psi0.norm_sqr() - 1.0).abs() > crate::hilbert::NORM_TOL {
            return Err(Error::invalid("initial state must be normalized"));
        }
        Ok(Trajectory {
            engine: self,
            trajectory_id,
            rng: TrajectoryRng::new(self.cfg.master_seed, trajectory_id),
            psi: psi0.amps().to_vec(),
            scratch: vec![C64::new(0.0, 0.0); psi0.dim()],
            steps: 0,
        })
    }

    /// Runs trajectory `trajectory_id` to `t_end`.
    pub fn run(&self, trajectory_id: u64, psi0: &StateVector) -> Result<TrajectoryRecord> {
        self.run_inner(trajectory_id, psi0).map_err(|e| e.in_trajectory(trajectory_id))
    }

    fn run_inner(&self, trajectory_id: u64, psi0: &StateVector) -> Result<TrajectoryRecord> {
        let mut traj = self.trajectory(trajectory_id, psi0)?;
        let mut events = Vec::new();
        let mut samples = Vec::new();
        let stride = self.cfg.population_stride;
        if stride.is_some() {
            samples.push(traj.population_sample());
        }
        for _ in 0..self.cfg.n_steps() {
            if let Some(channel) = traj.step()? {
                events.push(DetectionEvent { trajectory_id, time: traj.time(), channel });
            }
            if let Some(s) = stride {
                if traj.steps % s == 0 {
                    samples.push(traj.population_sample());
                }
            }
        }
        Ok(TrajectoryRecord { trajectory_id, events, population_samples: samples, final_state: traj.state() })
    }
}

/// A single conditional wavefunction advanced one step at a time.
pub struct Trajectory<'e, 'm> {
    engine: &'e Engine<'m>,
    trajectory_id: u64,
    rng: TrajectoryRng,
    psi: Vec<C64>,
    scratch: Vec<C64>,
    steps: u64,
}

impl Trajectory<'_, '_> {
    pub fn id(&self) -> u64 {
        self.trajectory_id
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.engine.cfg.dt
    }

    pub fn state(&self) -> StateVector {
        StateVector::from_raw(self.psi.clone(), true)
    }

    pub fn population_sample(&self) -> PopulationSample {
        PopulationSample { time: self.time(), excited: excited_populations(&self.psi) }
    }

    /// Detection probabilities `(P_R, P_L)` for the next step.
    pub fn jump_probabilities(&self) -> (f64, f64) {
        let dt = self.engine.cfg.dt;
        let pr = (dt * quad_form(&self.engine.rate_right, &self.psi)).clamp(0.0, 1.0);
        let pl = (dt * quad_form(&self.engine.rate_left, &self.psi)).clamp(0.0, 1.0);
        (pr, pl)
    }

    /// Advances one step; returns the channel if a photon was detected.
    pub fn step(&mut self) -> Result<Option<Channel>> {
        let (pr, pl) = self.jump_probabilities();
        if pr + pl > MAX_STEP_PROBABILITY {
            return Err(Error::StepTooLarge { probability: pr + pl, limit: MAX_STEP_PROBABILITY });
        }
        let r = self.rng.uniform();
        let e = self.engine;
        let (op, channel) = if r < pr {
            (&e.jump_right, Some(Channel::Right))
        } else if r < pr + pl {
            (&e.jump_left, Some(Channel::Left))
        } else {
            (&e.propagator, None)
        };
        matvec_into(op, &self.psi, &mut self.scratch);
        let norm_sqr: f64 = self.scratch.iter().map(|a| a.norm_sqr()).sum();
        if let Some(channel) = channel {
            if norm_sqr < DARK_COLLAPSE_NORM_SQR {
                return Err(Error::DarkStateCollapse { channel, norm_sqr });
            }
        } else if !(norm_sqr > 0.0 && norm_sqr.is_finite()) {
            return Err(Error::NonFinite("no-jump evolution"));
        }
        let inv = 1.0 / norm_sqr.sqrt();
        for (p, s) in self.psi.iter_mut().zip(&self.scratch) {
            *p = s * inv;
        }
        self.steps += 1;
        Ok(channel)
    }
}

pub fn run_trajectory(m: &ModelOperators, cfg: &TrajectoryConfig, trajectory_id: u64, psi0: &StateVector) -> Result<TrajectoryRecord> {
    Engine::new(m, cfg.clone())?.run(trajectory_id, psi0)
}

/// Runs trajectories `0..n_traj` on the current rayon pool. Output is in
/// trajectory-id order regardless of scheduling.
pub fn run_ensemble(m: &ModelOperators, cfg: &TrajectoryConfig, n_traj: u64, psi0: &StateVector) -> Result<Vec<TrajectoryRecord>> {
    if n_traj == 0 {
        return Err(Error::invalid("ensemble needs at least one trajectory"));
    }
    let engine = Engine::new(m, cfg.clone())?;
    (0..n_traj).into_par_iter().map(|id| engine.run(id, psi0)).collect()
}

/// Bounded-memory ensemble: trajectories are computed `chunk` at a time in
/// parallel and handed to `sink` in id order.
pub fn stream_ensemble<E>(
    engine: &Engine<'_>,
    ids: Range<u64>,
    chunk: usize,
    psi0: &StateVector,
    mut sink: impl FnMut(TrajectoryRecord) -> std::result::Result<(), E>,
) -> std::result::Result<(), E>
where
    E: From<Error>,
{
    let chunk = chunk.max(1) as u64;
    let mut start = ids.start;
    while start < ids.end {
        let end = (start + chunk).min(ids.end);
        let batch: Vec<TrajectoryRecord> = (start..end).into_par_iter().map(|id| engine.run(id, psi0)).collect::<Result<_>>()?;
        for rec in batch {
            sink(rec)?;
        }
        start = end;
    }
    Ok(())
}

/// Ensemble average of `|ψ(t)⟩⟨ψ(t)|` over trajectories `0..n_traj` at the
/// given times (rounded to whole steps). Summation runs in id order so the
/// result does not depend on the worker count.
pub fn average_density(engine: &Engine<'_>, n_traj: u64, psi0: &StateVector, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    if n_traj == 0 {
        return Err(Error::invalid("ensemble needs at least one trajectory"));
    }
    let dt = engine.cfg.dt;
    let sample_steps: Vec<u64> = times.iter().map(|t| (t / dt).round() as u64).collect();
    if sample_steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("sample times must be non-decreasing"));
    }
    let dim = psi0.dim();
    let one_run = |id: u64| -> Result<Vec<Operator>> {
        let mut traj = engine.trajectory(id, psi0)?;
        let mut out = Vec::with_capacity(sample_steps.len());
        for &s in &sample_steps {
            while traj.steps() < s {
                traj.step().map_err(|e| e.in_trajectory(id))?;
            }
            out.push(traj.state().projector().into_operator());
        }
        Ok(out)
    };
    let mut acc = vec![Operator::zeros(dim); sample_steps.len()];
    const CHUNK: u64 = 1024;
    let mut start = 0;
    while start < n_traj {
        let end = (start + CHUNK).min(n_traj);
        let batch: Vec<Vec<Operator>> = (start..end).into_par_iter().map(one_run).collect::<Result<_>>()?;
        for projs in batch {
            for (a, p) in acc.iter_mut().zip(projs) {
                *a = &*a + &p;
            }
        }
        start = end;
    }
    acc.into_iter().map(|a| DensityMatrix::from_operator(a.scale_re(1.0 / n_traj as f64))).collect()
}

/// Closed-form no-jump evolution of a single qubit from `psi0`:
/// `c_e/c_g = r₀e^{−κt} + r*(1 − e^{−κt})` with `κ = Γ/2 + iΔ` and
/// `r* = −i·gα/κ`; at Δ = 0 the fixed point is `−i√(2/Γ)·α/√(2π)`.
pub fn conditional_state_analytics(p: &OneQubitParams, psi0: &StateVector, t: f64) -> Result<StateVector> {
    if psi0.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: psi0.dim() });
    }
    let psi0 = psi0.normalize()?;
    let (cg0, ce0) = (psi0.amps()[0], psi0.amps()[1]);
    if cg0.norm() == 0.0 {
        // H_eff has no σ⁻ term: |e⟩ stays |e⟩ under no-jump evolution.
        return Ok(psi0);
    }
    let i = C64::new(0.0, 1.0);
    let kappa = C64::new(p.gamma / 2.0, p.delta);
    let fixed = -i * p.coupling() * p.alpha / kappa;
    let decay = (-kappa * t).exp();
    let ratio = ce0 / cg0 * decay + fixed * (1.0 - decay);
    let cg = cg0 * (C64::new(-p.flux() / 2.0, p.delta / 2.0) * t).exp();
    StateVector::new(vec![cg, ratio * cg])?.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_one_qubit;
    use std::f64::consts::PI;

    fn one(alpha: f64) -> ModelOperators {
        build_one_qubit(&OneQubitParams::new(1.0, C64::new(alpha, 0.0), 0.0).unwrap()).unwrap()
    }

    #[test]
    fn undriven_ground_state_never_clicks() {
        let m = one(0.0);
        let rec = run_trajectory(&m, &TrajectoryConfig::new(0.01, 200.0, 1), 0, &m.ground_state()).unwrap();
        assert!(rec.events.is_empty());
    }

    #[test]
    fn excited_state_emits_exactly_once() {
        let m = one(0.0);
        let cfg = TrajectoryConfig::new(0.01, 60.0, 9);
        for id in 0..50 {
            let rec = run_trajectory(&m, &cfg, id, &StateVector::basis(2, 1)).unwrap();
            assert!(rec.events.len() <= 1);
        }
    }

    #[test]
    fn config_validation() {
        let m = one(1.0);
        assert!(TrajectoryConfig::new(0.011, 1.0, 0).validate(&m).is_err());
        assert!(TrajectoryConfig::new(0.0, 1.0, 0).validate(&m).is_err());
        assert!(TrajectoryConfig::new(0.01, -1.0, 0).validate(&m).is_err());
        assert!(TrajectoryConfig::new(0.01, 1.0, 0).validate(&m).is_ok());
        let cfg = TrajectoryConfig { population_stride: Some(0), ..TrajectoryConfig::new(0.01, 1.0, 0) };
        assert!(cfg.validate(&m).is_err());
    }

    #[test]
    fn events_carry_step_end_times_and_increase() {
        let m = one(1.0);
        let cfg = TrajectoryConfig::new(0.01, 500.0, 3);
        let rec = run_trajectory(&m, &cfg, 5, &m.ground_state()).unwrap();
        assert!(!rec.events.is_empty());
        for w in rec.events.windows(2) {
            assert!(w[1].time > w[0].time);
        }
        for e in &rec.events {
            let k = e.time / cfg.dt;
            assert!((k - k.round()).abs() < 1e-6);
            assert_eq!(e.trajectory_id, 5);
        }
    }

    #[test]
    fn population_samples_follow_stride() {
        let m = one(1.0);
        let cfg = TrajectoryConfig { population_stride: Some(10), ..TrajectoryConfig::new(0.01, 1.0, 3) };
        let rec = run_trajectory(&m, &cfg, 0, &m.ground_state()).unwrap();
        assert_eq!(rec.population_samples.len(), 11);
        assert_eq!(rec.population_samples[0].excited, vec![0.0]);
    }

    #[test]
    fn left_jump_resets_to_ground() {
        let m = one(1.0);
        let engine = Engine::new(&m, TrajectoryConfig::new(0.01, 0.0, 11)).unwrap();
        let mut traj = engine.trajectory(0, &m.ground_state()).unwrap();
        let mut seen = 0;
        while seen < 50 {
            if traj.step().unwrap() == Some(Channel::Left) {
                let s = traj.state();
                assert_eq!(s.amps()[1], C64::new(0.0, 0.0));
                assert!((s.amps()[0].norm() - 1.0).abs() < 1e-15);
                seen += 1;
            }
        }
    }

    #[test]
    fn analytic_conditional_state_limits() {
        let p = OneQubitParams::new(1.0, C64::new(1.0, 0.0), 0.0).unwrap();
        let psi0 = StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let same = conditional_state_analytics(&p, &psi0, 0.0).unwrap();
        assert!(same.max_abs_diff(&psi0) < 1e-15);
        let late = conditional_state_analytics(&p, &psi0, 80.0).unwrap();
        let ratio = late.amps()[1] / late.amps()[0];
        let expected = C64::new(0.0, -(2.0f64).sqrt() / (2.0 * PI).sqrt());
        assert!((ratio - expected).norm() < 1e-12);
    }
}
