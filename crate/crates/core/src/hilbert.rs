//! Dense complex linear algebra on the small Hilbert spaces of one and two
//! qubits (dimension 2 and 4), plus their 16-dimensional superoperators.
//!
//! Basis ordering: a single qubit is `(|g⟩, |e⟩)`; a qubit pair is
//! `(|gg⟩, |ge⟩, |eg⟩, |ee⟩)` with the first label belonging to qubit 1, which
//! is the ordering produced by [`Operator::kron`].

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance on Σ|amps|² for a state to count as normalized.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance for Hermiticity of operators built by this crate.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

const QUBIT_LABELS: [&str; 2] = ["g", "e"];
const PAIR_LABELS: [&str; 4] = ["gg", "ge", "eg", "ee"];

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
    normalized: bool,
}

impl StateVector {
    /// Builds a state from raw amplitudes. The `normalized` flag is set when
    /// the squared norm is within [`NORM_TOL`] of one.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("state vector must be non-empty"));
        }
        if !amps.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        Ok(Self { amps, normalized: (norm_sqr - 1.0).abs() <= NORM_TOL })
    }

    pub(crate) fn from_raw(amps: Vec<C64>, normalized: bool) -> Self {
        Self { amps, normalized }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dimension {dim}");
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self { amps, normalized: true }
    }

    /// `|g⟩` or `|gg⟩`.
    pub fn ground(dim: usize) -> Self {
        Self::basis(dim, 0)
    }

    /// `|e⟩` or `|ee⟩`.
    pub fn fully_excited(dim: usize) -> Self {
        Self::basis(dim, dim - 1)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.amps.iter().all(|a| *a == ZERO)
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { amps: self.amps.iter().map(|a| a / n).collect(), normalized: true })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn scale(&self, c: C64) -> StateVector {
        StateVector { amps: self.amps.iter().map(|a| a * c).collect(), normalized: false }
    }

    pub fn add(&self, other: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), other.dim())?;
        let amps = self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect();
        StateVector::new(amps)
    }

    pub fn basis_labels(&self) -> Option<&'static [&'static str]> {
        match self.dim() {
            2 => Some(&QUBIT_LABELS),
            4 => Some(&PAIR_LABELS),
            _ => None,
        }
    }

    /// Probability of finding each qubit excited: one entry for a single
    /// qubit, two entries for a pair. Uses the normalized state.
    pub fn excited_populations(&self) -> Vec<f64> {
        excited_populations(&self.amps)
    }

    /// Largest amplitude-wise deviation between two states.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn projector(&self) -> DensityMatrix {
        let d = self.dim();
        let n = self.norm_sqr();
        let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
        let op = Operator::from_fn(d, |r, c| self.amps[r] * self.amps[c].conj() * scale);
        DensityMatrix(op)
    }
}

pub(crate) fn excited_populations(amps: &[C64]) -> Vec<f64> {
    let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let n = if n > 0.0 { n } else { 1.0 };
    match amps.len() {
        2 => vec![amps[1].norm_sqr() / n],
        4 => vec![
            (amps[2].norm_sqr() + amps[3].norm_sqr()) / n,
            (amps[1].norm_sqr() + amps[3].norm_sqr()) / n,
        ],
        _ => amps.iter().map(|a| a.norm_sqr() / n).collect(),
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels = self.basis_labels();
        for (k, a) in self.amps.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            match labels {
                Some(l) => write!(f, "({:.6}{:+.6}i)|{}⟩", a.re, a.im, l[k])?,
                None => write!(f, "({:.6}{:+.6}i)|{}⟩", a.re, a.im, k)?,
            }
        }
        Ok(())
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::invalid("operator must be non-empty"));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            data.extend(row);
        }
        if !data.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::NonFinite("operator"));
        }
        Ok(Self { dim, data })
    }

    /// Lowering operator `|g⟩⟨e|`.
    pub fn sigma_minus() -> Self {
        let mut op = Self::zeros(2);
        op.data[1] = ONE;
        op
    }

    pub fn sigma_plus() -> Self {
        Self::sigma_minus().adjoint()
    }

    /// `|e⟩⟨e| − |g⟩⟨g|`.
    pub fn sigma_z() -> Self {
        let mut op = Self::zeros(2);
        op.data[0] = -ONE;
        op.data[3] = ONE;
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    pub(crate) fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        let (a, b) = (self.dim, other.dim);
        Operator::from_fn(a * b, |r, c| self.get(r / b, c / b) * other.get(r % b, c % b))
    }

    pub fn adjoint(&self) -> Operator {
        Operator::from_fn(self.dim, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> Operator {
        Operator::from_fn(self.dim, |r, c| self.get(c, r))
    }

    pub fn conj(&self) -> Operator {
        Operator { dim: self.dim, data: self.data.iter().map(|a| a.conj()).collect() }
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator { dim: self.dim, data: self.data.iter().map(|a| a * c).collect() }
    }

    pub fn scale_re(&self, c: f64) -> Operator {
        self.scale(C64::new(c, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        check_dim(self.dim, other.dim)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Operator) -> Operator {
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                for (o, b) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Operator { dim: d, data: out }
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Max absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|c| (0..self.dim).map(|r| self.get(r, c).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim, psi.dim())?;
        let mut out = vec![ZERO; self.dim];
        matvec_into(&self.data, &psi.amps, &mut out);
        Ok(StateVector { amps: out, normalized: false })
    }

    /// Matrix exponential `exp(self)` by scaling and squaring on a degree-18
    /// Taylor kernel. The scaled matrix has 1-norm at most 1/2, which puts the
    /// truncation error below 1e-22 relative.
    pub fn exp(&self) -> Operator {
        const DEGREE: usize = 18;
        let norm = self.norm_one();
        let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
        let scaled = self.scale_re(0.5f64.powi(squarings as i32));
        let id = Operator::identity(self.dim);
        // Horner: I + A(I + A/2(I + A/3(...)))
        let mut acc = id.clone();
        for k in (1..=DEGREE).rev() {
            acc = &id + &scaled.mul_unchecked(&acc).scale_re(1.0 / k as f64);
        }
        for _ in 0..squarings {
            acc = acc.mul_unchecked(&acc);
        }
        acc
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Operator {
        Operator::from_fn(m.nrows(), |r, c| m[(r, c)])
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        Operator { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        Operator { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    /// Panics on dimension mismatch; use [`Operator::matmul`] for a checked product.
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.mul_unchecked(rhs)
    }
}

impl Add<C64> for &Operator {
    type Output = Operator;
    /// Adds `c·I`.
    fn add(self, c: C64) -> Operator {
        let mut out = self.clone();
        for k in 0..self.dim {
            out.data[k * self.dim + k] += c;
        }
        out
    }
}

pub(crate) fn matvec_into(op: &[C64], x: &[C64], out: &mut [C64]) {
    let d = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &op[r * d..(r + 1) * d];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `Re⟨x|A|x⟩` for Hermitian `A`.
pub(crate) fn quad_form(op: &[C64], x: &[C64]) -> f64 {
    let d = x.len();
    let mut acc = ZERO;
    for r in 0..d {
        let row = &op[r * d..(r + 1) * d];
        let ax: C64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        acc += x[r].conj() * ax;
    }
    acc.re
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn apply(op: &Operator, psi: &StateVector) -> Result<StateVector> {
    op.apply(psi)
}

/// `⟨ψ|op|ψ⟩`; `psi` must be normalized.
pub fn expectation(op: &Operator, psi: &StateVector) -> Result<C64> {
    check_dim(op.dim(), psi.dim())?;
    if !psi.is_normalized() {
        return Err(Error::invalid("expectation requires a normalized state"));
    }
    psi.inner(&op.apply(psi)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// First-order `(1 − i·H·dt)`.
    Euler,
    /// Exact `exp(−i·H·dt)`.
    #[default]
    Exp,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Exp => "exp",
        }
    }

    /// Single-step no-jump propagator for `h_eff` over `dt`.
    pub fn propagator(self, h_eff: &Operator, dt: f64) -> Operator {
        let generator = h_eff.scale(-I * dt);
        match self {
            Scheme::Euler => &generator + ONE,
            Scheme::Exp => generator.exp(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "exp" => Ok(Scheme::Exp),
            other => Err(Error::invalid(format!("unknown scheme '{other}' (expected euler|exp)"))),
        }
    }
}

/// No-jump evolution of `psi` under the non-Hermitian `h_eff` for `dt`.
/// The result is left unnormalized.
pub fn evolve_nonhermitian(h_eff: &Operator, psi: &StateVector, dt: f64, scheme: Scheme) -> Result<StateVector> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if !h_eff.is_finite() {
        return Err(Error::NonFinite("effective Hamiltonian"));
    }
    if !psi.is_normalized() {
        return Err(Error::invalid("no-jump evolution requires a normalized state"));
    }
    let out = scheme.propagator(h_eff, dt).apply(psi)?;
    if !out.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
        return Err(Error::NonFinite("evolved state"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn from_operator(op: Operator) -> Result<Self> {
        if !op.is_finite() {
            return Err(Error::NonFinite("density matrix"));
        }
        Ok(Self(op))
    }

    pub fn pure(psi: &StateVector) -> Self {
        psi.projector()
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0.get(row, col)
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.0.is_hermitian(tol)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.0.trace() - ONE).norm() <= tol
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + &self.0.adjoint()).scale_re(0.5);
        let eig = SymmetricEigen::new(h.to_nalgebra());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Tr{op·ρ}`.
    pub fn expect(&self, op: &Operator) -> C64 {
        (op * &self.0).trace()
    }

    /// `Tr{J ρ J†}`, the detection rate for jump operator `J`.
    pub fn jump_rate(&self, jump: &Operator) -> f64 {
        (&(jump * &self.0) * &jump.adjoint()).trace().re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.get(k, k).re).collect()
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.0.max_abs_diff(&other.0)
    }
}

/// Lindblad generator `ρ ↦ −i[H,ρ] + Σᵢ (JᵢρJᵢ† − ½{Jᵢ†Jᵢ, ρ})`.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    h_coherent: Operator,
    jumps: Vec<Operator>,
    // ρ ↦ Gρ + ρG† + Σ JρJ†, with G = −iH − ½ΣJ†J.
    drift: Operator,
    drift_adj: Operator,
    jump_adj: Vec<Operator>,
    rate_scale: f64,
}

impl LindbladGenerator {
    pub fn new(h_coherent: Operator, jumps: Vec<Operator>) -> Result<Self> {
        let dim = h_coherent.dim();
        for j in &jumps {
            check_dim(dim, j.dim())?;
        }
        if !h_coherent.is_finite() || !jumps.iter().all(Operator::is_finite) {
            return Err(Error::NonFinite("Lindblad generator"));
        }
        let deviation = h_coherent.hermiticity_defect();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let mut decay = Operator::zeros(dim);
        for j in &jumps {
            decay = &decay + &(&j.adjoint() * j);
        }
        let drift = &h_coherent.scale(-I) - &decay.scale_re(0.5);
        let rate_scale = SymmetricEigen::new(decay.to_nalgebra())
            .eigenvalues
            .iter()
            .copied()
            .fold(0.0, f64::max);
        Ok(Self {
            drift_adj: drift.adjoint(),
            drift,
            jump_adj: jumps.iter().map(Operator::adjoint).collect(),
            h_coherent,
            jumps,
            rate_scale,
        })
    }

    /// Overrides the characteristic rate used to validate integration steps.
    pub fn with_rate_scale(mut self, rate: f64) -> Self {
        self.rate_scale = rate;
        self
    }

    pub fn dim(&self) -> usize {
        self.h_coherent.dim()
    }

    pub fn h_coherent(&self) -> &Operator {
        &self.h_coherent
    }

    pub fn jumps(&self) -> &[Operator] {
        &self.jumps
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    pub(crate) fn apply_op(&self, rho: &Operator) -> Operator {
        let mut out = &(&self.drift * rho) + &(rho * &self.drift_adj);
        for (j, jd) in self.jumps.iter().zip(&self.jump_adj) {
            out = &out + &(&(j * rho) * jd);
        }
        out
    }

    /// `dρ/dt`. The result is traceless; it is returned as a raw operator
    /// wrapped in [`DensityMatrix`] for convenience.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.dim(), rho.dim())?;
        Ok(DensityMatrix(self.apply_op(&rho.0)))
    }

    /// The no-click generator for jump `index`: the drift keeps `−½J†J` but the
    /// recycling term `JρJ†` is dropped, so the trace decays at the detection
    /// rate of that channel. Other channels still act normally.
    pub fn without_recycling(&self, index: usize) -> Result<Self> {
        if index >= self.jumps.len() {
            return Err(Error::invalid(format!("jump index {index} out of range")));
        }
        let mut out = self.clone();
        out.jumps.remove(index);
        out.jump_adj.remove(index);
        Ok(out)
    }

    /// Row-major vectorization: `vec(ρ)[i·d + j] = ρᵢⱼ`, so
    /// `vec(AρB) = (A ⊗ Bᵀ)·vec(ρ)`.
    pub fn vectorized(&self) -> Operator {
        let d = self.dim();
        let id = Operator::identity(d);
        let mut l = &self.drift.kron(&id) + &id.kron(&self.drift_adj.transpose());
        for (j, jd) in self.jumps.iter().zip(&self.jump_adj) {
            l = &l + &j.kron(&jd.transpose());
        }
        l
    }
}

pub fn superoperator_apply(gen: &LindbladGenerator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    gen.apply(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let psi = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let out = apply(&Operator::identity(2), &psi).unwrap();
        assert_eq!(out.amps(), psi.amps());
        assert!(!out.is_normalized());
    }

    #[test]
    fn lowering_operator_action() {
        let sm = Operator::sigma_minus();
        let e = StateVector::basis(2, 1);
        let g = StateVector::ground(2);
        assert_eq!(sm.apply(&e).unwrap().amps(), g.amps());
        assert!(sm.apply(&g).unwrap().is_zero());
    }

    #[test]
    fn pair_dark_state_is_annihilated() {
        let id = Operator::identity(2);
        let s1 = Operator::sigma_minus().kron(&id);
        let s2 = id.kron(&Operator::sigma_minus());
        let op = &s1 + &s2.scale(I);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // (|ge⟩ − i|eg⟩)/√2
        let dark = StateVector::new(vec![c(0.0, 0.0), c(r, 0.0), c(0.0, -r), c(0.0, 0.0)]).unwrap();
        assert!(op.apply(&dark).unwrap().norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = Operator::identity(4).apply(&StateVector::ground(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, found: 2 }));
    }

    #[test]
    fn excited_projector_expectation() {
        let n = &Operator::sigma_plus() * &Operator::sigma_minus();
        let v = expectation(&n, &StateVector::basis(2, 1)).unwrap();
        assert_eq!(v, ONE);
    }

    #[test]
    fn expectation_rejects_unnormalized() {
        let psi = StateVector::new(vec![c(2.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(expectation(&Operator::identity(2), &psi).is_err());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(Operator::zeros(4).exp().max_abs_diff(&Operator::identity(4)), 0.0);
    }

    #[test]
    fn exp_of_diagonal_matches_scalar_exp() {
        let d = Operator::from_rows(vec![vec![c(-3.0, 1.0), ZERO], vec![ZERO, c(0.25, -7.0)]]).unwrap();
        let e = d.exp();
        assert!((e.get(0, 0) - c(-3.0, 1.0).exp()).norm() < 1e-13);
        assert!((e.get(1, 1) - c(0.25, -7.0).exp()).norm() < 1e-12);
        assert_eq!(e.get(0, 1), ZERO);
    }

    #[test]
    fn exp_matches_nilpotent_series() {
        // exp(a·σ⁻) = I + a·σ⁻ exactly.
        let a = c(1.7, -0.3);
        let e = Operator::sigma_minus().scale(a).exp();
        let expected = &Operator::identity(2) + &Operator::sigma_minus().scale(a);
        assert!(e.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn evolve_rejects_bad_step() {
        let h = Operator::zeros(2);
        let g = StateVector::ground(2);
        assert!(evolve_nonhermitian(&h, &g, 0.0, Scheme::Exp).is_err());
        assert!(evolve_nonhermitian(&h, &g, -1.0, Scheme::Euler).is_err());
        assert!(evolve_nonhermitian(&h, &g, f64::NAN, Scheme::Exp).is_err());
    }

    #[test]
    fn zero_hamiltonian_leaves_state_unchanged() {
        let psi = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        for scheme in [Scheme::Euler, Scheme::Exp] {
            let out = evolve_nonhermitian(&Operator::zeros(2), &psi, 0.1, scheme).unwrap();
            assert!(out.max_abs_diff(&psi) < 1e-15);
        }
    }

    #[test]
    fn hermitian_evolution_preserves_norm() {
        let h = Operator::from_rows(vec![vec![c(0.3, 0.0), c(0.2, -0.7)], vec![c(0.2, 0.7), c(-1.1, 0.0)]]).unwrap();
        let psi = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let out = evolve_nonhermitian(&h, &psi, 0.9, Scheme::Exp).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spontaneous_emission_rate() {
        let gamma = 1.0;
        let j = Operator::sigma_minus().scale_re((gamma / 2.0f64).sqrt());
        let gen = LindbladGenerator::new(Operator::zeros(2), vec![j.clone(), j]).unwrap();
        let rho = DensityMatrix::pure(&StateVector::basis(2, 1));
        let d = gen.apply(&rho).unwrap();
        assert!((d.get(1, 1).re + gamma).abs() < 1e-15);
        assert!((d.get(0, 0).re - gamma).abs() < 1e-15);
    }

    #[test]
    fn vectorized_generator_matches_direct_action() {
        let h = Operator::from_rows(vec![vec![c(0.5, 0.0), c(0.1, 0.2)], vec![c(0.1, -0.2), c(-0.5, 0.0)]]).unwrap();
        let j = Operator::from_rows(vec![vec![c(0.1, 0.3), c(0.7, 0.0)], vec![ZERO, c(0.1, 0.3)]]).unwrap();
        let gen = LindbladGenerator::new(h, vec![j]).unwrap();
        let psi = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let rho = DensityMatrix::pure(&psi);
        let direct = gen.apply(&rho).unwrap();
        let l = gen.vectorized();
        let v = StateVector::from_raw(rho.as_operator().data().to_vec(), false);
        let lv = l.apply(&v).unwrap();
        for k in 0..4 {
            assert!((lv.amps()[k] - direct.as_operator().data()[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn non_hermitian_hamiltonian_is_rejected() {
        let h = Operator::sigma_minus();
        assert!(matches!(LindbladGenerator::new(h, vec![]), Err(Error::NotHermitian { .. })));
    }
}
