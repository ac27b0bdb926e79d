//! Jump operators, Hamiltonians and Lindblad generators for one or two qubits
//! coupled to a waveguide, in the frame rotating at the drive frequency.
//!
//! The jump operators are the output fields (up to the phase factor `i`):
//! the right channel superposes qubit emission with the transmitted coherent
//! drive, the left channel carries qubit emission only. Coupling strengths
//! follow `Γ = 4πg²`, so each qubit decays at `Γ/2` into each direction.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{LindbladGenerator, Operator, StateVector, NORM_TOL};

/// Above this per-step jump probability the first-order jump rule is refused.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;
/// Squared norm below which a collapse is treated as landing on a dark state.
pub const DARK_COLLAPSE_NORM_SQR: f64 = 1e-24;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// Transmitted (right-going) photons.
    Right,
    /// Reflected (left-going) photons.
    Left,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Right, Channel::Left];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Right => "R",
            Channel::Left => "L",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" | "right" => Ok(Channel::Right),
            "L" | "l" | "left" => Ok(Channel::Left),
            other => Err(Error::invalid(format!("unknown channel '{other}' (expected R|L)"))),
        }
    }
}

/// Coupling strength `g` for a decay rate `Γ = 4πg²`.
pub fn coupling(gamma: f64) -> f64 {
    (gamma / (4.0 * PI)).sqrt()
}

/// Input photon flux `n̄ = |α|²/2π`.
pub fn photon_flux(alpha: C64) -> f64 {
    alpha.norm_sqr() / (2.0 * PI)
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneQubitParams {
    /// Total decay rate Γ.
    pub gamma: f64,
    /// Coherent drive amplitude α_k.
    pub alpha: C64,
    /// Detuning Δ = ω_eg − k.
    pub delta: f64,
}

impl OneQubitParams {
    pub fn new(gamma: f64, alpha: C64, delta: f64) -> Result<Self> {
        let p = Self { gamma, alpha, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        finite("gamma", self.gamma)?;
        finite("alpha.re", self.alpha.re)?;
        finite("alpha.im", self.alpha.im)?;
        finite("delta", self.delta)?;
        if self.gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn coupling(&self) -> f64 {
        coupling(self.gamma)
    }

    pub fn flux(&self) -> f64 {
        photon_flux(self.alpha)
    }
}

/// Which form of the photon-mediated exchange term enters the two-qubit
/// coherent Hamiltonian. The two agree when `phase_eg1 = phase_eg2 = π/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExchangeTerm {
    /// `iπg₁g₂(σ₂⁺σ₁⁻e^{−iφ₂} + σ₁⁺σ₂⁻e^{−iφ₁}) + h.c.`, the cascaded-network
    /// form; reduces to `(Γ/2)·sin φ·(σ₁⁺σ₂⁻ + h.c.)` for identical qubits.
    #[default]
    Symmetric,
    /// `iπg₁g₂σ₂⁺σ₁⁻(e^{−iφ₂} + e^{−iφ₁}) + h.c.`, kept for comparison. It
    /// breaks qubit-exchange symmetry at zero separation.
    AsPrinted,
}

impl ExchangeTerm {
    pub fn as_str(self) -> &'static str {
        match self {
            ExchangeTerm::Symmetric => "symmetric",
            ExchangeTerm::AsPrinted => "as-printed",
        }
    }
}

impl std::str::FromStr for ExchangeTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(ExchangeTerm::Symmetric),
            "as-printed" => Ok(ExchangeTerm::AsPrinted),
            other => Err(Error::invalid(format!("unknown exchange term '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha: C64,
    pub delta1: f64,
    pub delta2: f64,
    /// Drive propagation phase `kΔt` between the qubits.
    pub phase_k: f64,
    /// Emission propagation phases `ω_eg⁽ⁱ⁾Δt`.
    pub phase_eg1: f64,
    pub phase_eg2: f64,
    pub exchange: ExchangeTerm,
}

impl TwoQubitParams {
    /// Identical resonant qubits separated by propagation phase `phase`.
    pub fn identical(gamma: f64, alpha: C64, phase: f64) -> Result<Self> {
        let p = Self {
            gamma1: gamma,
            gamma2: gamma,
            alpha,
            delta1: 0.0,
            delta2: 0.0,
            phase_k: phase,
            phase_eg1: phase,
            phase_eg2: phase,
            exchange: ExchangeTerm::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Derives the emission phases from the delay: `ω_eg⁽ⁱ⁾Δt = kΔt + Δᵢ·Δt`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_delay(
        gamma1: f64,
        gamma2: f64,
        alpha: C64,
        delta1: f64,
        delta2: f64,
        phase_k: f64,
        delay: f64,
    ) -> Result<Self> {
        let p = Self {
            gamma1,
            gamma2,
            alpha,
            delta1,
            delta2,
            phase_k,
            phase_eg1: phase_k + delta1 * delay,
            phase_eg2: phase_k + delta2 * delay,
            exchange: ExchangeTerm::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("alpha.re", self.alpha.re),
            ("alpha.im", self.alpha.im),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("phase_k", self.phase_k),
            ("phase_eg1", self.phase_eg1),
            ("phase_eg2", self.phase_eg2),
        ] {
            finite(name, v)?;
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 || self.gamma1 + self.gamma2 <= 0.0 {
            return Err(Error::invalid(format!(
                "decay rates must be non-negative and not both zero, got {} and {}",
                self.gamma1, self.gamma2
            )));
        }
        Ok(())
    }

    pub fn flux(&self) -> f64 {
        photon_flux(self.alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelParams {
    OneQubit(OneQubitParams),
    TwoQubit(TwoQubitParams),
}

/// Everything the trajectory engine and the master-equation solver need for
/// one parameter set. Immutable once built.
#[derive(Clone, Debug)]
pub struct ModelOperators {
    pub params: ModelParams,
    pub j_right: Operator,
    pub j_left: Operator,
    pub h_coherent: Operator,
    pub h_eff: Operator,
    pub generator: LindbladGenerator,
    /// Input photon flux n̄.
    pub flux: f64,
    /// Fastest rate among Γᵢ, n̄ and gᵢ|α|; sets the admissible time step.
    pub rate_scale: f64,
    jdj_right: Operator,
    jdj_left: Operator,
}

impl ModelOperators {
    fn assemble(params: ModelParams, j_right: Operator, j_left: Operator, h_coherent: Operator, rate_scale: f64) -> Result<Self> {
        let flux = match params {
            ModelParams::OneQubit(p) => p.flux(),
            ModelParams::TwoQubit(p) => p.flux(),
        };
        let jdj_right = &j_right.adjoint() * &j_right;
        let jdj_left = &j_left.adjoint() * &j_left;
        let h_eff = &h_coherent - &(&jdj_right + &jdj_left).scale(I * 0.5);
        let generator = LindbladGenerator::new(h_coherent.clone(), vec![j_right.clone(), j_left.clone()])?
            .with_rate_scale(rate_scale);
        Ok(Self { params, j_right, j_left, h_coherent, h_eff, generator, flux, rate_scale, jdj_right, jdj_left })
    }

    pub fn dim(&self) -> usize {
        self.h_coherent.dim()
    }

    pub fn jump(&self, channel: Channel) -> &Operator {
        match channel {
            Channel::Right => &self.j_right,
            Channel::Left => &self.j_left,
        }
    }

    /// `J†J` for the channel.
    pub fn detection_rate_operator(&self, channel: Channel) -> &Operator {
        match channel {
            Channel::Right => &self.jdj_right,
            Channel::Left => &self.jdj_left,
        }
    }

    pub fn ground_state(&self) -> StateVector {
        StateVector::ground(self.dim())
    }

    /// Largest time step allowed for trajectories and integration.
    pub fn max_dt(&self) -> f64 {
        0.01 / self.rate_scale
    }
}

pub fn build_one_qubit(p: &OneQubitParams) -> Result<ModelOperators> {
    p.validate()?;
    let g = p.coupling();
    let beta = p.alpha / (2.0 * PI).sqrt();
    let sm = Operator::sigma_minus();
    let sp = Operator::sigma_plus();
    let emission = sm.scale_re((p.gamma / 2.0).sqrt());
    let j_right = &emission + I * beta;
    let j_left = emission;
    let drive = &sp.scale(p.alpha * g * 0.5) + &sm.scale(p.alpha.conj() * g * 0.5);
    let h_coherent = &Operator::sigma_z().scale_re(p.delta / 2.0) + &drive;
    let rate_scale = p.gamma.max(p.flux()).max(g * p.alpha.norm());
    ModelOperators::assemble(ModelParams::OneQubit(*p), j_right, j_left, h_coherent, rate_scale)
}

pub fn build_two_qubit(p: &TwoQubitParams) -> Result<ModelOperators> {
    p.validate()?;
    let (g1, g2) = (coupling(p.gamma1), coupling(p.gamma2));
    let beta = p.alpha / (2.0 * PI).sqrt();
    let id = Operator::identity(2);
    let s1 = Operator::sigma_minus().kron(&id);
    let s2 = id.kron(&Operator::sigma_minus());
    let z1 = Operator::sigma_z().kron(&id);
    let z2 = id.kron(&Operator::sigma_z());
    let phase = |x: f64| C64::from_polar(1.0, x);
    let (a1, a2) = ((p.gamma1 / 2.0).sqrt(), (p.gamma2 / 2.0).sqrt());

    let j_right = &(&s1.scale(phase(p.phase_eg1) * a1) + &s2.scale_re(a2)) + I * beta * phase(p.phase_k);
    let j_left = &s1.scale_re(a1) + &s2.scale(phase(p.phase_eg2) * a2);

    // Drive terms: the full drive at each qubit minus the part already carried
    // by the interference term of the right jump operator.
    let detuning_phase1 = p.phase_eg1 - p.phase_k;
    let drive = &s1.scale((1.0 - 0.5 * phase(detuning_phase1)) * g1 * p.alpha.conj())
        + &s2.scale(0.5 * phase(-p.phase_k) * g2 * p.alpha.conj());
    let s2p_s1m = &s2.adjoint() * &s1;
    let s1p_s2m = &s1.adjoint() * &s2;
    let exchange = match p.exchange {
        ExchangeTerm::Symmetric => &s2p_s1m.scale(I * phase(-p.phase_eg2)) + &s1p_s2m.scale(I * phase(-p.phase_eg1)),
        ExchangeTerm::AsPrinted => s2p_s1m.scale(I * (phase(-p.phase_eg2) + phase(-p.phase_eg1))),
    }
    .scale_re(PI * g1 * g2);

    let mut h = &z1.scale_re(p.delta1 / 2.0) + &z2.scale_re(p.delta2 / 2.0);
    h = &h + &(&drive + &drive.adjoint());
    h = &h + &(&exchange + &exchange.adjoint());

    let rate_scale = p.gamma1.max(p.gamma2).max(p.flux()).max(g1.max(g2) * p.alpha.norm());
    ModelOperators::assemble(ModelParams::TwoQubit(*p), j_right, j_left, h, rate_scale)
}

/// Probability `dt·⟨ψ|J†J|ψ⟩` of a detection on `channel` within one step,
/// clamped to `[0, 1]`.
pub fn jump_probability(m: &ModelOperators, psi: &StateVector, channel: Channel, dt: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if !psi.is_normalized() {
        return Err(Error::invalid("jump probability requires a normalized state"));
    }
    if psi.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: psi.dim() });
    }
    let rate = crate::hilbert::quad_form(m.detection_rate_operator(channel).data(), psi.amps());
    let probability = dt * rate;
    if probability > MAX_STEP_PROBABILITY {
        return Err(Error::StepTooLarge { probability, limit: MAX_STEP_PROBABILITY });
    }
    Ok(probability.clamp(0.0, 1.0))
}

/// Post-detection state `J|ψ⟩/‖J|ψ⟩‖`.
pub fn collapse(m: &ModelOperators, psi: &StateVector, channel: Channel) -> Result<StateVector> {
    if (psi.norm_sqr() - 1.0).abs() > NORM_TOL {
        return Err(Error::invalid("collapse requires a normalized state"));
    }
    let out = m.jump(channel).apply(psi)?;
    let norm_sqr = out.norm_sqr();
    if norm_sqr < DARK_COLLAPSE_NORM_SQR {
        return Err(Error::DarkStateCollapse { channel, norm_sqr });
    }
    out.normalize()
}
