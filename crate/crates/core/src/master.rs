//! Deterministic reference: fixed-step RK4 integration of the master
//! equation, the exact steady state, and intensity correlations g²(τ) from
//! the jump operators.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Operator};
use crate::model::{Channel, ModelOperators};

pub use crate::hilbert::LindbladGenerator;

/// Largest admissible `dt` in units of the generator's rate scale.
pub const MAX_DT_FRACTION: f64 = 0.01;
/// Relative singular-value threshold for the null space of the generator.
pub const NULL_SPACE_TOL: f64 = 1e-9;
/// Channel flux below which g² is undefined.
pub const DARK_FLUX: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveSource {
    TrajectoryHistogram,
    MasterEquation,
    Analytic,
}

impl CurveSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveSource::TrajectoryHistogram => "trajectory-histogram",
            CurveSource::MasterEquation => "master-equation",
            CurveSource::Analytic => "analytic",
        }
    }
}

impl fmt::Display for CurveSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampled g²(τ). Histogram curves carry per-point standard errors and the
/// bin width; `taus` are then bin centres.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationCurve {
    pub channel: Channel,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub bin_width: Option<f64>,
    pub source: CurveSource,
}

impl CorrelationCurve {
    /// Linear interpolation; clamps to the end values outside the grid.
    pub fn interpolate(&self, tau: f64) -> f64 {
        let t = &self.taus;
        if tau <= t[0] {
            return self.values[0];
        }
        let n = t.len();
        if tau >= t[n - 1] {
            return self.values[n - 1];
        }
        let k = t.partition_point(|&x| x <= tau);
        let (t0, t1) = (t[k - 1], t[k]);
        let w = (tau - t0) / (t1 - t0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }

    /// Mean of the interpolated curve over `[lo, hi]` (trapezoid rule on the
    /// curve's own grid points inside the interval).
    pub fn average_over(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return self.interpolate(lo);
        }
        let mut xs = vec![lo];
        xs.extend(self.taus.iter().copied().filter(|&t| t > lo && t < hi));
        xs.push(hi);
        let mut acc = 0.0;
        for w in xs.windows(2) {
            acc += 0.5 * (self.interpolate(w[0]) + self.interpolate(w[1])) * (w[1] - w[0]);
        }
        acc / (hi - lo)
    }
}

fn check_step(gen: &LindbladGenerator, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let limit = MAX_DT_FRACTION / gen.rate_scale().max(f64::MIN_POSITIVE);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("time step {dt} exceeds {limit:.3e} (0.01 / fastest rate)")));
    }
    Ok(())
}

fn rk4_step(gen: &LindbladGenerator, rho: &Operator, h: f64) -> Operator {
    let k1 = gen.apply_op(rho);
    let k2 = gen.apply_op(&(rho + &k1.scale_re(h / 2.0)));
    let k3 = gen.apply_op(&(rho + &k2.scale_re(h / 2.0)));
    let k4 = gen.apply_op(&(rho + &k3.scale_re(h)));
    let incr = (&(&k1 + &k4) + &(&k2 + &k3).scale_re(2.0)).scale_re(h / 6.0);
    rho + &incr
}

fn propagate(gen: &LindbladGenerator, rho: Operator, duration: f64, dt: f64) -> Result<Operator> {
    if duration <= 0.0 {
        return Ok(rho);
    }
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut rho = rho;
    for _ in 0..steps {
        rho = rk4_step(gen, &rho, h);
    }
    if !rho.is_finite() {
        return Err(Error::NonFinite("master-equation integration"));
    }
    Ok(rho)
}

/// ρ(t_end) by RK4 with steps no longer than `dt`.
pub fn integrate(gen: &LindbladGenerator, rho0: &DensityMatrix, t_end: f64, dt: f64) -> Result<DensityMatrix> {
    check_step(gen, dt)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("t_end must be non-negative, got {t_end}")));
    }
    if rho0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch { expected: gen.dim(), found: rho0.dim() });
    }
    DensityMatrix::from_operator(propagate(gen, rho0.as_operator().clone(), t_end, dt)?)
}

/// Samples ρ(t) at increasing `times` in one forward pass.
pub fn integrate_sampled(gen: &LindbladGenerator, rho0: &DensityMatrix, times: &[f64], dt: f64) -> Result<Vec<DensityMatrix>> {
    check_step(gen, dt)?;
    check_grid(times)?;
    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.as_operator().clone();
    let mut t = 0.0;
    for &target in times {
        rho = propagate(gen, rho, target - t, dt)?;
        t = target;
        out.push(DensityMatrix::from_operator(rho.clone())?);
    }
    Ok(out)
}

fn check_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if taus[0] < 0.0 || !taus.iter().all(|t| t.is_finite()) {
        return Err(Error::invalid("time grid must be finite and start at or after 0"));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Unique stationary state from the null space of the vectorized generator.
pub fn steady_state(gen: &LindbladGenerator) -> Result<DensityMatrix> {
    let d = gen.dim();
    let l = gen.vectorized().to_nalgebra();
    let svd = l.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let tol = NULL_SPACE_TOL * sigma_max.max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] <= tol).collect();
    if null.len() != 1 {
        return Err(Error::NonUniqueSteadyState { dimension: null.len() });
    }
    // Row k of Vᴴ is the conjugate of the k-th right singular vector.
    let row = v_t.row(null[0]);
    let vec: Vec<C64> = row.iter().map(|z| z.conj()).collect();
    let rho = DMatrix::from_row_slice(d, d, &vec);
    let rho = Operator::from_nalgebra(&rho);
    let trace = rho.trace();
    let rho = rho.scale(1.0 / trace);
    let rho = (&rho + &rho.adjoint()).scale_re(0.5);
    DensityMatrix::from_operator(rho)
}

/// Steady-state detection rates on both channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyFluxes {
    pub right: f64,
    pub left: f64,
    pub input: f64,
}

impl SteadyFluxes {
    pub fn of(m: &ModelOperators, rho_ss: &DensityMatrix) -> Self {
        Self { right: rho_ss.jump_rate(&m.j_right), left: rho_ss.jump_rate(&m.j_left), input: m.flux }
    }

    pub fn get(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Right => self.right,
            Channel::Left => self.left,
        }
    }

    /// `R + L − n̄`; zero for elastic scattering.
    pub fn conservation_residual(&self) -> f64 {
        self.right + self.left - self.input
    }
}

fn conditioned_state(rho: &Operator, jump: &Operator) -> (Operator, f64) {
    let post = &(jump * rho) * &jump.adjoint();
    let rate = post.trace().re;
    (post.scale_re(1.0 / rate), rate)
}

/// Steady-state g²(τ) for one channel, sampled on `taus` in a single forward
/// pass of the conditioned state. `dt` bounds the integration step.
pub fn g2_master(gen: &LindbladGenerator, channel: Channel, jump: &Operator, taus: &[f64], dt: f64) -> Result<CorrelationCurve> {
    let rho_ss = steady_state(gen)?;
    g2_from_state(gen, channel, jump, &rho_ss, taus, dt)
}

/// g²(τ) with the steady state supplied by the caller.
pub fn g2_from_state(
    gen: &LindbladGenerator,
    channel: Channel,
    jump: &Operator,
    rho_ss: &DensityMatrix,
    taus: &[f64],
    dt: f64,
) -> Result<CorrelationCurve> {
    check_step(gen, dt)?;
    check_grid(taus)?;
    let flux = rho_ss.jump_rate(jump);
    if flux <= DARK_FLUX {
        return Err(Error::DarkChannel { channel, flux });
    }
    let (mut rho, _) = conditioned_state(rho_ss.as_operator(), jump);
    let mut values = Vec::with_capacity(taus.len());
    let mut t = 0.0;
    for &tau in taus {
        rho = propagate(gen, rho, tau - t, dt)?;
        t = tau;
        values.push(DensityMatrix::from_operator(rho.clone())?.jump_rate(jump) / flux);
    }
    Ok(CorrelationCurve { channel, taus: taus.to_vec(), values, stderr: None, bin_width: None, source: CurveSource::MasterEquation })
}

/// `g²(0) = Tr{J²ρJ†²}/Tr{JρJ†}²` without propagation.
pub fn g2_zero(jump: &Operator, rho_ss: &DensityMatrix) -> f64 {
    let flux = rho_ss.jump_rate(jump);
    let j2 = jump * jump;
    rho_ss.jump_rate(&j2) / (flux * flux)
}

/// Stationary same-channel waiting-time density for jump `jump_index` of
/// `gen`, in units of the mean waiting time: `W(τ)·τ̄` with
/// `W(τ) = Tr{J e^{L₀τ}(Jρ_ssJ†) J†} / Tr{Jρ_ssJ†}`, where `L₀` omits that
/// channel's recycling term. Directly comparable with g²(τ).
pub fn wtd_master(
    gen: &LindbladGenerator,
    channel: Channel,
    jump_index: usize,
    rho_ss: &DensityMatrix,
    taus: &[f64],
    dt: f64,
) -> Result<CorrelationCurve> {
    check_step(gen, dt)?;
    check_grid(taus)?;
    let jump = gen
        .jumps()
        .get(jump_index)
        .ok_or_else(|| Error::invalid(format!("jump index {jump_index} out of range")))?
        .clone();
    let no_click = gen.without_recycling(jump_index)?;
    let flux = rho_ss.jump_rate(&jump);
    if flux <= DARK_FLUX {
        return Err(Error::DarkChannel { channel, flux });
    }
    let (mut rho, _) = conditioned_state(rho_ss.as_operator(), &jump);
    let mut values = Vec::with_capacity(taus.len());
    let mut t = 0.0;
    for &tau in taus {
        rho = propagate(&no_click, rho, tau - t, dt)?;
        t = tau;
        let post = &(&jump * &rho) * &jump.adjoint();
        values.push(post.trace().re / flux);
    }
    Ok(CorrelationCurve { channel, taus: taus.to_vec(), values, stderr: None, bin_width: None, source: CurveSource::MasterEquation })
}

/// Two-time correlation g²(t, t+τ) starting from a non-stationary ρ(t): the
/// numerator propagates the conditioned state, the denominator the
/// unconditioned one.
pub fn g2_transient(
    gen: &LindbladGenerator,
    channel: Channel,
    jump: &Operator,
    rho_t: &DensityMatrix,
    taus: &[f64],
    dt: f64,
) -> Result<CorrelationCurve> {
    check_step(gen, dt)?;
    check_grid(taus)?;
    let flux0 = rho_t.jump_rate(jump);
    if flux0 <= DARK_FLUX {
        return Err(Error::DarkChannel { channel, flux: flux0 });
    }
    let (mut cond, _) = conditioned_state(rho_t.as_operator(), jump);
    let mut plain = rho_t.as_operator().clone();
    let mut values = Vec::with_capacity(taus.len());
    let mut t = 0.0;
    for &tau in taus {
        cond = propagate(gen, cond, tau - t, dt)?;
        plain = propagate(gen, plain, tau - t, dt)?;
        t = tau;
        let num = DensityMatrix::from_operator(cond.clone())?.jump_rate(jump);
        let den = DensityMatrix::from_operator(plain.clone())?.jump_rate(jump);
        if den <= DARK_FLUX {
            return Err(Error::DarkChannel { channel, flux: den });
        }
        values.push(num / den);
    }
    Ok(CorrelationCurve { channel, taus: taus.to_vec(), values, stderr: None, bin_width: None, source: CurveSource::MasterEquation })
}

/// Uniform grid `0, step, 2·step, …, ≤ tau_max`.
pub fn uniform_grid(tau_max: f64, step: f64) -> Vec<f64> {
    let n = (tau_max / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;
    use crate::model::{build_one_qubit, OneQubitParams};

    fn one(alpha: f64) -> ModelOperators {
        build_one_qubit(&OneQubitParams::new(1.0, C64::new(alpha, 0.0), 0.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let m = one(1.0);
        let rho0 = DensityMatrix::pure(&StateVector::basis(2, 1));
        assert_eq!(integrate(&m.generator, &rho0, 0.0, 0.01).unwrap(), rho0);
    }

    #[test]
    fn spontaneous_decay() {
        let m = one(0.0);
        let rho0 = DensityMatrix::pure(&StateVector::basis(2, 1));
        for t in [0.5, 1.0, 3.0, 7.0] {
            let rho = integrate(&m.generator, &rho0, t, 0.01).unwrap();
            assert!((rho.get(1, 1).re - (-t).exp()).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn rejects_oversized_step() {
        let m = one(1.0);
        let rho0 = DensityMatrix::pure(&StateVector::ground(2));
        assert!(integrate(&m.generator, &rho0, 1.0, 0.05).is_err());
        assert!(integrate(&m.generator, &rho0, 1.0, 0.0).is_err());
    }

    #[test]
    fn undriven_steady_state_is_ground() {
        let m = one(0.0);
        let rho = steady_state(&m.generator).unwrap();
        assert!(rho.max_abs_diff(&DensityMatrix::pure(&StateVector::ground(2))) < 1e-12);
    }

    #[test]
    fn degenerate_null_space_is_reported() {
        let gen = LindbladGenerator::new(Operator::zeros(2), vec![]).unwrap();
        assert!(matches!(steady_state(&gen), Err(Error::NonUniqueSteadyState { dimension: 4 })));
    }

    #[test]
    fn left_channel_is_antibunched_at_zero_delay() {
        let m = one(1.0);
        let rho = steady_state(&m.generator).unwrap();
        assert_eq!(g2_zero(&m.j_left, &rho), 0.0);
        let curve = g2_master(&m.generator, Channel::Left, &m.j_left, &[0.0, 1.0], 0.01).unwrap();
        assert!(curve.values[0].abs() < 1e-15);
    }

    #[test]
    fn dark_channel_is_an_error() {
        let m = one(0.0);
        let err = g2_master(&m.generator, Channel::Left, &m.j_left, &[0.0], 0.01).unwrap_err();
        assert!(matches!(err, Error::DarkChannel { channel: Channel::Left, .. }));
    }

    #[test]
    fn zero_delay_shortcut_matches_propagated_curve() {
        let m = one(1.0);
        let rho = steady_state(&m.generator).unwrap();
        for ch in Channel::BOTH {
            let j = m.jump(ch);
            let curve = g2_from_state(&m.generator, ch, j, &rho, &[0.0], 0.01).unwrap();
            assert!((curve.values[0] - g2_zero(j, &rho)).abs() < 1e-10);
        }
    }

    #[test]
    fn transient_correlation_from_steady_state_is_stationary() {
        let m = one(1.0);
        let rho = steady_state(&m.generator).unwrap();
        let taus = uniform_grid(5.0, 0.5);
        let a = g2_transient(&m.generator, Channel::Right, &m.j_right, &rho, &taus, 0.01).unwrap();
        let b = g2_from_state(&m.generator, Channel::Right, &m.j_right, &rho, &taus, 0.01).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[0.0, 0.0]).is_err());
        assert!(check_grid(&[-1.0, 0.0]).is_err());
        assert_eq!(uniform_grid(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn curve_bin_average() {
        let c = CorrelationCurve {
            channel: Channel::Right,
            taus: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 1.0, 2.0],
            stderr: None,
            bin_width: None,
            source: CurveSource::Analytic,
        };
        assert!((c.average_over(0.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((c.average_over(0.5, 1.5) - 1.0).abs() < 1e-15);
        assert!((c.interpolate(0.25) - 0.25).abs() < 1e-15);
    }
}
