//! Quantum-jump (Monte-Carlo wave function) simulation of one or two qubits
//! driven through a 1D waveguide, with a master-equation reference and the
//! photon-counting statistics built from detection records.
//!
//! * [`hilbert`] — states, operators, non-Hermitian propagation, Lindblad generators.
//! * [`model`] — jump operators and Hamiltonians for the one- and two-qubit set-ups.
//! * [`master`] — RK4 integration, steady states, g²(τ) and waiting-time references.
//! * [`trajectory`] — the stochastic engine and ensemble runners.
//! * [`stats`] — waiting-time and correlation estimators, mergeable histograms.

pub mod error;
pub mod hilbert;
pub mod master;
pub mod model;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, LindbladGenerator, Operator, Scheme, StateVector};
pub use master::{CorrelationCurve, CurveSource, SteadyFluxes};
pub use model::{build_one_qubit, build_two_qubit, Channel, ExchangeTerm, ModelOperators, ModelParams, OneQubitParams, TwoQubitParams};
pub use num_complex::Complex64 as C64;
pub use trajectory::{DetectionEvent, Engine, TrajectoryConfig, TrajectoryRecord};
