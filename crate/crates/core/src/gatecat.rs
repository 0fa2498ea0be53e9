//! Native gate catalog: waveform plans, parameter maps, target unitaries,
//! second-order frequency corrections, gate runs and λ optimization.
//!
//! Everything here is f64. Times are in units of 1/ωx, energies in ħωx.
//!
//! Conventions: |↑⟩ = |0̃⟩ (lower energy), |↓⟩ = |2̃⟩, σz = |↑⟩⟨↑| − |↓⟩⟨↓|,
//! σφ = σ₋e^{−iφ} + σ₊e^{iφ} with σ₋ = |↑⟩⟨↓|.

use crate::beamforge::{
    build_coeff_matrix, solve_depths_symmetric, solve_with_matrix, BeamGeometry, CoefficientMatrix,
    DepthSchedule, TrapLayout, DEFAULT_K_SIM, FIVE_BEAM_POSITIONS, THREE_BEAM_ZETA,
};
use crate::dynamics::{
    assemble, gate_fidelity, observables, Diagnostics, DriveSpec, MotionalState, Observables, OperatorTables,
    ProductBasis, PropagatorConfig, Propagator, DEFAULT_N_REL_DYN,
};
use crate::error::{Error, Result};
use crate::linalg::{annihilation, expm, CMatrix};
use crate::relmode::{diagonalize_relative, qubit_coefficients, QubitCoefficients, RelativeSpectrum, DEFAULT_N_REL};
use crate::waveform::{Signal, Tone, Waveform};
use nalgebra::{Complex, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

type C64 = Complex<f64>;

/// Levels added above the COM cutoff when building target states.
const TARGET_PAD: usize = 40;
/// Closest allowed approach of ω̃ and ω̃′ in the SR/R correction denominators.
pub const RESONANCE_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    D,
    R,
    SR,
    S,
    CD,
    CR,
    CS,
}

impl GateKind {
    pub const ALL: [GateKind; 7] = [GateKind::D, GateKind::R, GateKind::SR, GateKind::S, GateKind::CD, GateKind::CR, GateKind::CS];

    pub fn uses_five_beam(self) -> bool {
        matches!(self, GateKind::D | GateKind::CD)
    }

    /// Interaction strength used for this family unless overridden.
    pub fn default_u_prime(self) -> f64 {
        if self.uses_five_beam() {
            0.86
        } else {
            0.36
        }
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::CD | GateKind::CR | GateKind::CS)
    }

    /// Parameter is complex with phase θ (α or ξ) rather than a real angle γ.
    pub fn has_theta(self) -> bool {
        matches!(self, GateKind::D | GateKind::S | GateKind::CD | GateKind::CS)
    }

    fn is_squeeze(self) -> bool {
        matches!(self, GateKind::S | GateKind::CS)
    }

    fn is_displacement(self) -> bool {
        matches!(self, GateKind::D | GateKind::CD)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl FromStr for GateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .iter()
            .copied()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown gate kind '{s}'")))
    }
}

/// λ given explicitly or the keyword "optimize".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Fixed(f64),
    Keyword(String),
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Keyword("optimize".into())
    }
}

impl LambdaSpec {
    pub fn fixed(&self) -> Result<Option<f64>> {
        match self {
            LambdaSpec::Fixed(l) => Ok(Some(*l)),
            LambdaSpec::Keyword(k) if k == "optimize" => Ok(None),
            LambdaSpec::Keyword(k) => Err(Error::InvalidInput(format!("lambda must be a number or \"optimize\", got '{k}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitInit {
    #[default]
    Up,
    Down,
    Plus,
    Minus,
}

impl QubitInit {
    pub fn amplitudes(self) -> [C64; 2] {
        let s = FRAC_1_SQRT_2;
        match self {
            QubitInit::Up => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            QubitInit::Down => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            QubitInit::Plus => [C64::new(s, 0.0), C64::new(s, 0.0)],
            QubitInit::Minus => [C64::new(s, 0.0), C64::new(-s, 0.0)],
        }
    }
}

/// Qubit state times a COM coherent state |α⟩.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialState {
    #[serde(default)]
    pub qubit: QubitInit,
    /// (Re α, Im α)
    #[serde(default)]
    pub alpha: [f64; 2],
}

impl InitialState {
    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha[0], self.alpha[1])
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRequest {
    pub kind: GateKind,
    /// |α|, γ or |ξ|
    pub magnitude: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub lambda: LambdaSpec,
    /// Gate duration in seconds; derived from the parameter map when absent.
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub u_prime: Option<f64>,
    /// "three-beam" or "five-beam"; chosen from the gate kind when absent.
    #[serde(default)]
    pub layout_ref: Option<String>,
    #[serde(default)]
    pub initial: InitialState,
    /// Apply the second-order Δ, δ corrections (R and SR only).
    #[serde(default = "yes")]
    pub corrections: bool,
}

impl GateRequest {
    pub fn new(kind: GateKind, magnitude: f64) -> Self {
        GateRequest {
            kind,
            magnitude,
            theta: 0.0,
            phi: 0.0,
            lambda: LambdaSpec::default(),
            duration_s: None,
            u_prime: None,
            layout_ref: None,
            initial: InitialState::default(),
            corrections: true,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = LambdaSpec::Fixed(lambda);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude >= 0.0) || !self.magnitude.is_finite() {
            return Err(Error::InvalidInput("gate magnitude must be >= 0".into()));
        }
        if let Some(l) = self.lambda.fixed()? {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidInput("lambda must lie in (0, 1)".into()));
            }
        }
        if let Some(t) = self.duration_s {
            if !(t > 0.0) {
                return Err(Error::InvalidInput("duration must be > 0".into()));
            }
            if self.lambda.fixed()?.is_some() {
                return Err(Error::InvalidInput("give lambda or duration, not both".into()));
            }
        }
        if let Some(u) = self.u_prime {
            if !(u >= 0.0) {
                return Err(Error::InvalidInput("u' must be >= 0".into()));
            }
        }
        if let Some(l) = &self.layout_ref {
            let five = match l.as_str() {
                "five-beam" => true,
                "three-beam" => false,
                _ => return Err(Error::InvalidInput(format!("unknown layout '{l}'"))),
            };
            if five != self.kind.uses_five_beam() {
                return Err(Error::InvalidInput(format!("{} needs the {} layout", self.kind, if five { "three-beam" } else { "five-beam" })));
            }
        }
        Ok(())
    }

    pub fn u_prime(&self) -> f64 {
        self.u_prime.unwrap_or_else(|| self.kind.default_u_prime())
    }

    /// Requested complex gate parameter (γ is real).
    pub fn parameter(&self) -> C64 {
        if self.kind.has_theta() {
            C64::from_polar(self.magnitude, self.theta)
        } else {
            C64::new(self.magnitude, 0.0)
        }
    }
}

/// Which parts of the engineered potential enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianModel {
    /// Static orders beyond V2 of the base layout plus every order of the drive.
    #[default]
    Full,
    /// Exact harmonic trap plus the controlled drive amplitudes only.
    Controlled,
}

/// Numerical settings shared by gate runs.
#[derive(Debug, Clone)]
pub struct SimSettings {
    pub geometry: BeamGeometry<f64>,
    pub three_beam_zeta: f64,
    pub five_beam_positions: [f64; 5],
    pub k_sim: usize,
    pub n_rel_spectrum: usize,
    pub n_rel_dyn: usize,
    /// COM cutoff; chosen from the target state when `None`.
    pub n_com: Option<usize>,
    pub propagator: PropagatorConfig<f64>,
    pub model: HamiltonianModel,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            geometry: BeamGeometry::rb87_default(),
            three_beam_zeta: THREE_BEAM_ZETA,
            five_beam_positions: FIVE_BEAM_POSITIONS,
            k_sim: DEFAULT_K_SIM,
            n_rel_spectrum: DEFAULT_N_REL,
            n_rel_dyn: DEFAULT_N_REL_DYN,
            n_com: None,
            propagator: PropagatorConfig::default(),
            model: HamiltonianModel::Full,
        }
    }
}

/// Parameter accumulated per unit time, (α, γ, ξ)/T.
pub fn parameter_rate(kind: GateKind, lambda: f64, theta: f64, eps_x: f64, c: &QubitCoefficients<f64>) -> C64 {
    let ph = if kind.has_theta() { C64::from_polar(1.0, theta) } else { C64::new(1.0, 0.0) };
    let m = match kind {
        GateKind::D => lambda / (8.0 * eps_x),
        GateKind::R => lambda / 4.0,
        GateKind::SR => lambda * c.c2 / 4.0,
        GateKind::S => lambda / 8.0,
        GateKind::CD => 3.0 * lambda * eps_x * c.c2 / 16.0,
        GateKind::CR => 3.0 * lambda * eps_x * eps_x * c.c2 / 4.0,
        GateKind::CS => 3.0 * lambda * eps_x * eps_x * c.c2 / 8.0,
    };
    ph * m
}

/// Gate parameter reached after duration T (ωx = 1 units).
pub fn parameter_map(kind: GateKind, lambda: f64, duration: f64, theta: f64, eps_x: f64, c: &QubitCoefficients<f64>) -> C64 {
    parameter_rate(kind, lambda, theta, eps_x, c) * duration
}

/// T giving |parameter| = magnitude at fixed λ.
pub fn duration_for(kind: GateKind, lambda: f64, magnitude: f64, eps_x: f64, c: &QubitCoefficients<f64>) -> f64 {
    magnitude / parameter_rate(kind, lambda, 0.0, eps_x, c).norm()
}

/// λ giving |parameter| = magnitude at fixed T.
pub fn lambda_for(kind: GateKind, duration: f64, magnitude: f64, eps_x: f64, c: &QubitCoefficients<f64>) -> f64 {
    magnitude / (parameter_rate(kind, 1.0, 0.0, eps_x, c).norm() * duration)
}

/// Detunings in units of ωx: the frame runs at ωx − Δ and ω̃ − δ, and the
/// drive tones use those frame frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectionSettings {
    pub delta_com: f64,
    pub delta_qubit: f64,
}

impl CorrectionSettings {
    /// Values in rad/s.
    pub fn in_rad_per_s(&self, omega_x: f64) -> (f64, f64) {
        (self.delta_com * omega_x, self.delta_qubit * omega_x)
    }
}

/// Second-order corrections for R and SR; zero for other kinds.
///
/// Δ removes only the λ² a†a shift, so the first-order rotation of R is kept.
pub fn correction_settings(kind: GateKind, lambda: f64, spec: &RelativeSpectrum<f64>) -> Result<CorrectionSettings> {
    if !matches!(kind, GateKind::R | GateKind::SR) {
        return Ok(CorrectionSettings::default());
    }
    if !(lambda.abs() < 1.0) {
        return Err(Error::InvalidInput("corrections need |lambda| < 1".into()));
    }
    let c = qubit_coefficients(spec)?;
    let w = spec.omega_tilde();
    let wp = spec.omega_tilde_prime();
    if (w - wp).abs() < RESONANCE_GUARD {
        return Err(Error::Resonance { gap: (w - wp).abs() });
    }
    let l2 = lambda * lambda;
    Ok(match kind {
        GateKind::R => CorrectionSettings {
            delta_com: l2 / (32.0 * w),
            delta_qubit: -l2 * c.c2 * c.c2 / (8.0 * w) + l2 * c.c2p * c.c2p / (16.0 * wp),
        },
        _ => CorrectionSettings {
            delta_com: l2 / 64.0 * (1.0 / (2.0 - w) + 1.0 / (2.0 + w)),
            delta_qubit: -2.0 * (l2 * c.c2 * c.c2 / (128.0 * w) + l2 * c.c2p * c.c2p / 128.0 * (1.0 / (w - wp) - 1.0 / (w + wp))),
        },
    })
}

/// Unit-λ drive signal for a gate; λ multiplies every tone.
pub fn drive_signal(kind: GateKind, lambda: f64, theta: f64, phi: f64, omega_tilde: f64, corr: &CorrectionSettings) -> Signal<f64> {
    let wx = 1.0 - corr.delta_com;
    let wt = omega_tilde - corr.delta_qubit;
    let l = lambda;
    Signal::new(match kind {
        GateKind::D => vec![Tone::sin(wx, theta, l)],
        GateKind::R => vec![Tone::cos(0.0, 0.0, l)],
        GateKind::SR | GateKind::CR => vec![Tone::cos(wt, phi, l)],
        GateKind::S => vec![Tone::sin(2.0 * wx, theta, -l)],
        GateKind::CD => vec![Tone::sin(wt + wx, theta + phi, l), Tone::sin(wt - wx, phi - theta, -l)],
        GateKind::CS => vec![Tone::sin(2.0 * wx + wt, theta + phi, -l), Tone::sin(2.0 * wx - wt, theta - phi, -l)],
    })
}

/// Controlled amplitudes (V_1..V_kmax) per unit λ.
pub fn controlled_direction(kind: GateKind, eps_x: f64, c: &QubitCoefficients<f64>) -> Vec<f64> {
    let mut v = vec![0.0; if kind.uses_five_beam() { 5 } else { 4 }];
    match kind {
        GateKind::D => v[0] = 1.0,
        GateKind::CD => v[2] = 1.0,
        GateKind::R | GateKind::SR | GateKind::S => v[1] = 1.0,
        GateKind::CS => v[3] = 1.0,
        GateKind::CR => {
            v[1] = eps_x * eps_x * (3.0 + c.c3 / c.c2);
            v[3] = -2.0;
        }
    }
    v
}

#[derive(Debug, Clone)]
pub struct WaveformPlan {
    pub kind: GateKind,
    pub layout: TrapLayout<f64>,
    /// Per-order waveforms with λ folded into the tone signs.
    pub waveforms: Vec<Waveform<f64>>,
    /// Beam modulation per unit signal, ΔU_j.
    pub modulation: Vec<f64>,
    pub signal: Signal<f64>,
    pub lambda: f64,
    pub corrections: CorrectionSettings,
}

impl WaveformPlan {
    pub fn schedule(&self, duration: f64) -> Result<DepthSchedule<f64>> {
        DepthSchedule::new(self.layout.base_depths.clone(), self.modulation.clone(), self.signal.clone(), duration)
    }

    /// Largest λ keeping all depths non-negative for any phase of the tones.
    pub fn lambda_limit(&self) -> f64 {
        let unit = self.signal.bound() / self.lambda.abs();
        self.layout
            .base_depths
            .iter()
            .zip(&self.modulation)
            .filter(|(_, m)| m.abs() > 0.0)
            .map(|(u0, m)| u0 / (m.abs() * unit))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Layout, base depths, per-λ beam directions and full-order coefficient matrix.
#[derive(Debug, Clone)]
pub struct LayoutPlan {
    pub layout: TrapLayout<f64>,
    pub full: CoefficientMatrix<f64>,
    /// ΔU per unit λ.
    pub direction: Vec<f64>,
}

pub fn layout_plan(kind: GateKind, settings: &SimSettings, c: &QubitCoefficients<f64>) -> Result<LayoutPlan> {
    let g = &settings.geometry;
    let target = controlled_direction(kind, g.eps_x, c);
    let (layout, direction) = if kind.uses_five_beam() {
        let layout = TrapLayout::five_beam(settings.five_beam_positions, g)?;
        let c5 = build_coeff_matrix(&layout.positions, 5, g)?;
        let u = solve_with_matrix(&DVector::from_vec(target), &c5)?;
        (layout, u.as_slice().to_vec())
    } else {
        let layout = TrapLayout::three_beam(settings.three_beam_zeta, g)?;
        let u = solve_depths_symmetric(target[1], target[3], settings.three_beam_zeta, g)?;
        (layout, u)
    };
    crate::beamforge::require_nonnegative(&layout.base_depths)?;
    let full = build_coeff_matrix(&layout.positions, settings.k_sim, g)?;
    Ok(LayoutPlan { layout, full, direction })
}

pub fn plan_waveforms(
    request: &GateRequest,
    lambda: f64,
    layout: &LayoutPlan,
    spec: &RelativeSpectrum<f64>,
    eps_x: f64,
) -> Result<WaveformPlan> {
    let c = qubit_coefficients(spec)?;
    let corrections = if request.corrections { correction_settings(request.kind, lambda, spec)? } else { CorrectionSettings::default() };
    let signal = drive_signal(request.kind, lambda, request.theta, request.phi, spec.omega_tilde(), &corrections);
    let direction = controlled_direction(request.kind, eps_x, &c);
    let waveforms = direction
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .map(|(i, &a)| Waveform { order: i + 1, amplitude: a, signal: signal.clone() })
        .collect();
    Ok(WaveformPlan {
        kind: request.kind,
        layout: layout.layout.clone(),
        waveforms,
        modulation: layout.direction.clone(),
        signal,
        lambda,
        corrections,
    })
}

/// exp(G) on {↑,↓} ⊗ Fock(n_fock), qubit-major ordering q·n_fock + n.
#[derive(Debug, Clone)]
pub struct TargetUnitary {
    pub kind: GateKind,
    pub n_fock: usize,
    pub matrix: CMatrix<f64>,
    pub tag: String,
}

impl TargetUnitary {
    /// U (q ⊗ com); `com` may be shorter than n_fock.
    pub fn apply(&self, qubit: [C64; 2], com: &[C64]) -> Vec<C64> {
        let n = self.n_fock;
        let mut v = nalgebra::DVector::<C64>::zeros(2 * n);
        for q in 0..2 {
            for (k, a) in com.iter().enumerate().take(n) {
                v[q * n + k] = qubit[q] * a;
            }
        }
        (&self.matrix * v).iter().cloned().collect()
    }

    pub fn unitarity_error(&self) -> f64 {
        let id = CMatrix::<f64>::identity(2 * self.n_fock, 2 * self.n_fock);
        (self.matrix.adjoint() * &self.matrix - id).iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

fn kron2(q: &[[C64; 2]; 2], x: &CMatrix<f64>) -> CMatrix<f64> {
    let n = x.nrows();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for a in 0..2 {
        for b in 0..2 {
            if q[a][b] != C64::new(0.0, 0.0) {
                out.view_mut((a * n, b * n), (n, n)).copy_from(&(x * q[a][b]));
            }
        }
    }
    out
}

/// Target unitary for a gate parameter (α, γ or ξ; γ uses the real part).
pub fn target_unitary(kind: GateKind, param: C64, phi: f64, c1: f64, n_fock: usize) -> Result<TargetUnitary> {
    if kind.is_displacement() && param.norm() > n_fock as f64 / 10.0 {
        return Err(Error::BasisInadequate(format!("|alpha| = {} needs more than {} Fock levels", param.norm(), n_fock)));
    }
    if kind.is_squeeze() && param.norm() > 1.5 {
        return Err(Error::BasisInadequate(format!("|xi| = {} above the supported 1.5", param.norm())));
    }
    let a: CMatrix<f64> = annihilation::<f64>(n_fock).map(|x| C64::new(x, 0.0));
    let ad = a.adjoint();
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let eye = [[one, z], [z, one]];
    let sz = [[one, z], [z, -one]];
    let sphi = [[z, C64::from_polar(1.0, -phi)], [C64::from_polar(1.0, phi), z]];
    let disp = &ad * param - &a * param.conj();
    let sq = (&a * &a * param.conj() - &ad * &ad * param) * C64::new(0.5, 0.0);
    let num = &ad * &a;
    let id = CMatrix::<f64>::identity(n_fock, n_fock);
    let g = param.re;
    let (gen, tag) = match kind {
        GateKind::D => (kron2(&eye, &disp), "alpha a^dag - alpha^* a"),
        GateKind::R => (
            (kron2(&eye, &num) + kron2(&sz, &id) * C64::new(c1, 0.0)) * (-i * g),
            "-i gamma (a^dag a + c1 sigma_z)",
        ),
        GateKind::SR => (kron2(&sphi, &id) * (-i * g / 2.0), "-i gamma sigma_phi / 2"),
        GateKind::S => (kron2(&eye, &sq), "(xi^* a^2 - xi a^dag^2)/2"),
        GateKind::CD => (kron2(&sphi, &disp), "(alpha a^dag - alpha^* a) sigma_phi"),
        GateKind::CR => (kron2(&sphi, &num) * (i * g), "i gamma a^dag a sigma_phi"),
        GateKind::CS => (kron2(&sphi, &sq), "(xi^* a^2 - xi a^dag^2) sigma_phi / 2"),
    };
    Ok(TargetUnitary { kind, n_fock, matrix: expm(&gen), tag: tag.into() })
}

fn coherent_vec(n: usize, alpha: C64) -> Vec<C64> {
    crate::dynamics::coherent_amplitudes(n, alpha)
}

/// U ψ0 on a padded Fock space of `n_com + TARGET_PAD` levels.
fn padded_target(request: &GateRequest, c1: f64, n_com: usize) -> Result<Vec<C64>> {
    let nf = n_com + TARGET_PAD;
    let u = target_unitary(request.kind, request.parameter(), request.phi, c1, nf)?;
    Ok(u.apply(request.initial.qubit.amplitudes(), &coherent_vec(nf, request.initial.alpha())))
}

fn population_above(v: &[C64], n_fock: usize, from: usize) -> f64 {
    (0..2).map(|q| (from..n_fock).map(|n| v[q * n_fock + n].norm_sqr()).sum::<f64>()).sum()
}

/// Smallest COM cutoff (steps of 8, at least 24) whose top 8 levels carry
/// less than 1e-12 of the target state.
pub fn auto_n_com(request: &GateRequest, c1: f64) -> Result<usize> {
    let mut n = 24;
    while n <= 400 {
        if !(request.kind.is_displacement() && request.magnitude > n as f64 / 10.0) {
            let v = padded_target(request, c1, n)?;
            if population_above(&v, n + TARGET_PAD, n - 8) < 1e-12 {
                return Ok(n);
            }
        }
        n += 8;
    }
    Err(Error::BasisInadequate("no COM cutoff up to 400 holds the target state".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityReport {
    pub kind: GateKind,
    pub magnitude: f64,
    pub theta: f64,
    pub phi: f64,
    pub u_prime: f64,
    pub lambda: f64,
    /// ωx·T
    pub duration: f64,
    pub duration_us: f64,
    pub fidelity: f64,
    pub infidelity: f64,
    pub leakage: f64,
    /// Magnitude estimated from the final state (None when not defined for the initial state).
    pub achieved: Option<f64>,
    /// Complex parameter estimate (D: ⟨a⟩ shift in the rotating frame).
    pub achieved_complex: Option<[f64; 2]>,
    pub corrections: CorrectionSettings,
    pub observables: Observables,
    pub diagnostics: Diagnostics,
}

/// Everything about a gate run that does not depend on λ.
pub struct GateSetup {
    pub request: GateRequest,
    pub settings: SimSettings,
    pub spectrum: RelativeSpectrum<f64>,
    pub coefficients: QubitCoefficients<f64>,
    pub layout: LayoutPlan,
    pub basis: ProductBasis,
    pub initial: MotionalState<f64>,
    /// U ψ0 in the product basis.
    pub target: nalgebra::DVector<C64>,
    /// Norm of U ψ0 lost to the COM cutoff.
    pub target_truncation: f64,
    propagator: Propagator<f64>,
}

impl GateSetup {
    pub fn new(request: &GateRequest, settings: &SimSettings) -> Result<Self> {
        request.validate()?;
        let u = request.u_prime();
        let spectrum = diagonalize_relative(u, settings.n_rel_spectrum)?;
        let coefficients = qubit_coefficients(&spectrum)?;
        let n_com = match settings.n_com {
            Some(n) => n,
            None => auto_n_com(request, coefficients.c1)?,
        };
        if request.kind.is_displacement() && request.magnitude > n_com as f64 / 10.0 {
            return Err(Error::BasisInadequate(format!("|alpha| = {} needs N_com >= {}", request.magnitude, 10.0 * request.magnitude)));
        }
        let basis = ProductBasis::new(n_com, settings.n_rel_dyn)?;
        let layout = layout_plan(request.kind, settings, &coefficients)?;
        let eps_x = settings.geometry.eps_x;
        let (base, unit) = match settings.model {
            HamiltonianModel::Full => (
                layout.full.apply(&layout.layout.base_depths).as_slice().to_vec(),
                layout.full.apply(&layout.direction).as_slice().to_vec(),
            ),
            HamiltonianModel::Controlled => (vec![0.0, 2.0], controlled_direction(request.kind, eps_x, &coefficients)),
        };
        let tables = OperatorTables::new(basis, &spectrum, settings.k_sim)?;
        let drive = DriveSpec { amplitudes: unit, signal: Signal::dc(), tag: request.kind.to_string() };
        let assembly = assemble(&tables, eps_x, &base, &[drive])?;
        let q = request.initial.qubit.amplitudes();
        let mut rel = vec![C64::new(0.0, 0.0); basis.n_rel];
        rel[0] = q[0];
        rel[1] = q[1];
        let initial = MotionalState::product(basis, &rel, &coherent_vec(n_com, request.initial.alpha()));
        let propagator = Propagator::new(&assembly, &initial)?;
        let padded = padded_target(request, coefficients.c1, n_com)?;
        let nf = n_com + TARGET_PAD;
        let mut target = nalgebra::DVector::<C64>::zeros(basis.dim());
        for q in 0..2 {
            for n in 0..n_com {
                target[basis.index(n, q)] = padded[q * nf + n];
            }
        }
        let target_truncation = population_above(&padded, nf, n_com);
        Ok(GateSetup {
            request: request.clone(),
            settings: settings.clone(),
            spectrum,
            coefficients,
            layout,
            basis,
            initial,
            target,
            target_truncation,
            propagator,
        })
    }

    pub fn eps_x(&self) -> f64 {
        self.settings.geometry.eps_x
    }

    pub fn duration_for(&self, lambda: f64) -> f64 {
        duration_for(self.request.kind, lambda, self.request.magnitude, self.eps_x(), &self.coefficients)
    }

    pub fn lambda_for(&self, duration: f64) -> f64 {
        lambda_for(self.request.kind, duration, self.request.magnitude, self.eps_x(), &self.coefficients)
    }

    pub fn plan(&self, lambda: f64) -> Result<WaveformPlan> {
        plan_waveforms(&self.request, lambda, &self.layout, &self.spectrum, self.eps_x())
    }

    /// Positivity limit on λ for this gate's tones.
    pub fn lambda_limit(&self) -> Result<f64> {
        Ok(self.plan(0.1)?.lambda_limit())
    }

    /// Frame energies n(1 − Δ) + Ẽ_i, with the qubit gap narrowed by δ.
    pub fn frame_energies(&self, corr: &CorrectionSettings) -> DVector<f64> {
        let b = self.basis;
        DVector::from_fn(b.dim(), |k, _| {
            let (n, i) = b.split(k);
            let shift = match i {
                0 => corr.delta_qubit / 2.0,
                1 => -corr.delta_qubit / 2.0,
                _ => 0.0,
            };
            n as f64 * (1.0 - corr.delta_com) + self.spectrum.energies[i] + shift
        })
    }

    /// Drives `state` for the duration the parameter map assigns to λ.
    pub fn evolve(&self, state: &MotionalState<f64>, lambda: f64) -> Result<(MotionalState<f64>, Diagnostics, WaveformPlan, f64)> {
        let duration = self.duration_for(lambda);
        let plan = self.plan(lambda)?;
        plan.schedule(duration)?;
        let (out, diag) = self.propagator.run_with(std::slice::from_ref(&plan.signal), state, duration, &self.settings.propagator)?;
        Ok((out, diag, plan, duration))
    }

    /// Full gate run at a fixed λ.
    pub fn run(&self, lambda: f64) -> Result<FidelityReport> {
        let (out, diag, plan, duration) = self.evolve(&self.initial, lambda)?;
        let frame = self.frame_energies(&plan.corrections);
        let fidelity = gate_fidelity(&out, &self.target, &frame, duration);
        let psi_i = out.to_interaction_picture(&frame, duration);
        let obs = observables(&out);
        let (achieved, achieved_complex) = self.estimate(&psi_i, &obs);
        let r = &self.request;
        Ok(FidelityReport {
            kind: r.kind,
            magnitude: r.magnitude,
            theta: r.theta,
            phi: r.phi,
            u_prime: self.spectrum.u_prime,
            lambda,
            duration,
            duration_us: self.settings.geometry.to_seconds(duration) * 1e6,
            fidelity,
            infidelity: 1.0 - fidelity,
            leakage: obs.leakage,
            achieved,
            achieved_complex,
            corrections: plan.corrections,
            observables: obs,
            diagnostics: diag,
        })
    }

    fn estimate(&self, psi_i: &MotionalState<f64>, obs: &Observables) -> (Option<f64>, Option<[f64; 2]>) {
        let a0 = self.request.initial.alpha();
        let a = mean_a(psi_i);
        let qubit = self.request.initial.qubit;
        match self.request.kind {
            GateKind::D => {
                let d = a - a0;
                (Some(d.norm()), Some([d.re, d.im]))
            }
            GateKind::CD if a0.norm() == 0.0 => (Some(obs.mean_n.max(0.0).sqrt()), None),
            GateKind::S | GateKind::CS if a0.norm() == 0.0 => (Some(obs.mean_n.max(0.0).sqrt().asinh()), None),
            GateKind::R if a0.norm() > 0.0 => {
                let g = -(a / a0).arg();
                (Some(g.rem_euclid(2.0 * PI)), None)
            }
            GateKind::SR if matches!(qubit, QubitInit::Up | QubitInit::Down) => {
                let p = if qubit == QubitInit::Up { obs.p_down } else { obs.p_up };
                (Some(2.0 * p.clamp(0.0, 1.0).sqrt().asin()), None)
            }
            GateKind::CR if a0.norm() > 0.0 && matches!(qubit, QubitInit::Up | QubitInit::Down) => {
                (Some((a / a0).re.clamp(-1.0, 1.0).acos()), None)
            }
            _ => (None, None),
        }
    }
}

/// ⟨a⟩ over the product basis.
pub fn mean_a(state: &MotionalState<f64>) -> C64 {
    let b = state.basis;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..b.n_rel {
        for n in 1..b.n_com {
            acc += state.amps[b.index(n - 1, i)].conj() * state.amps[b.index(n, i)] * (n as f64).sqrt();
        }
    }
    acc
}

/// Builds the setup and runs at the request's λ (or the λ implied by its duration).
pub fn run_gate(request: &GateRequest, settings: &SimSettings) -> Result<FidelityReport> {
    let setup = GateSetup::new(request, settings)?;
    let lambda = match (request.lambda.fixed()?, request.duration_s) {
        (Some(l), _) => l,
        (None, Some(s)) => setup.lambda_for(settings.geometry.to_phase(s)),
        (None, None) => return optimize_lambda(&setup, &OptimizeOptions::default()).map(|o| o.best),
    };
    setup.run(lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// Explicit grid; otherwise log-spaced over [lambda_min, lambda_max].
    pub grid: Option<Vec<f64>>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Bounds on ωx·T translated into λ bounds through the parameter map.
    pub duration_min: Option<f64>,
    pub duration_max: Option<f64>,
    pub points_per_decade: usize,
    /// Golden-section refinements around the best grid point.
    pub refine: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            grid: None,
            lambda_min: None,
            lambda_max: None,
            duration_min: None,
            duration_max: None,
            points_per_decade: 24,
            refine: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub infidelity: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimized {
    pub best: FidelityReport,
    /// Every evaluated point, ordered by λ.
    pub curve: Vec<CurvePoint>,
}

/// λ bounds from positivity and the options.
pub fn lambda_bounds(setup: &GateSetup, opts: &OptimizeOptions) -> Result<(f64, f64)> {
    let mut lo = opts.lambda_min.unwrap_or(1e-3);
    let mut hi = opts.lambda_max.unwrap_or(1.0).min(setup.lambda_limit()?).min(0.999);
    if let Some(tmax) = opts.duration_max {
        lo = lo.max(setup.lambda_for(tmax));
    }
    if let Some(tmin) = opts.duration_min {
        hi = hi.min(setup.lambda_for(tmin));
    }
    if !(lo <= hi) {
        return Err(Error::InfeasibleDepth { beam: 0, time: 0.0, value: hi - lo });
    }
    Ok((lo, hi))
}

pub fn default_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let n = (((hi / lo).log10() * per_decade as f64).ceil() as usize).max(1);
    (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect()
}

/// Local grid minima refined by golden section.
const REFINE_STARTS: usize = 8;

/// Grid search plus golden-section refinement; ties go to the smaller λ.
pub fn optimize_lambda(setup: &GateSetup, opts: &OptimizeOptions) -> Result<Optimized> {
    let grid = match &opts.grid {
        Some(g) if g.is_empty() => return Err(Error::InvalidInput("empty lambda grid".into())),
        Some(g) => {
            let mut g = g.clone();
            g.sort_by(|a, b| a.total_cmp(b));
            g
        }
        None => {
            let (lo, hi) = lambda_bounds(setup, opts)?;
            default_grid(lo, hi, opts.points_per_decade)
        }
    };
    let eval = |l: f64| -> (f64, Result<FidelityReport>) { (l, setup.run(l)) };
    let mut evals: Vec<(f64, Result<FidelityReport>)> = grid.par_iter().map(|&l| eval(l)).collect();
    let pick = |ev: &[(f64, Result<FidelityReport>)]| -> Option<usize> {
        let mut best: Option<usize> = None;
        let mut order: Vec<usize> = (0..ev.len()).collect();
        order.sort_by(|&a, &b| ev[a].0.total_cmp(&ev[b].0));
        for i in order {
            if let Ok(r) = &ev[i].1 {
                let better = match best {
                    None => true,
                    Some(b) => r.infidelity < ev[b].1.as_ref().map(|x| x.infidelity).unwrap_or(f64::INFINITY),
                };
                if better {
                    best = Some(i);
                }
            }
        }
        best
    };
    if pick(&evals).is_none() {
        return Err(match evals.into_iter().next().map(|e| e.1) {
            Some(Err(e)) => e,
            _ => Error::InvalidInput("no feasible lambda".into()),
        });
    }
    if opts.refine > 0 && grid.len() > 1 {
        let inf = |ev: &Result<FidelityReport>| ev.as_ref().map(|r| r.infidelity).unwrap_or(f64::INFINITY);
        let by_lambda: Vec<f64> = {
            let mut v: Vec<(f64, f64)> = evals.iter().map(|(l, r)| (*l, inf(r))).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.into_iter().map(|x| x.1).collect()
        };
        let mut minima: Vec<usize> = (0..grid.len())
            .filter(|&k| by_lambda[k].is_finite())
            .filter(|&k| (k == 0 || by_lambda[k] <= by_lambda[k - 1]) && (k + 1 == grid.len() || by_lambda[k] <= by_lambda[k + 1]))
            .collect();
        minima.sort_by(|&a, &b| by_lambda[a].total_cmp(&by_lambda[b]).then(a.cmp(&b)));
        minima.truncate(REFINE_STARTS);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for k in minima {
            let mut a = grid[k.saturating_sub(1)];
            let mut b = grid[(k + 1).min(grid.len() - 1)];
            let mut x1 = b - g * (b - a);
            let mut x2 = a + g * (b - a);
            let mut f1 = eval(x1);
            let mut f2 = eval(x2);
            for _ in 0..opts.refine {
                if inf(&f1.1) <= inf(&f2.1) {
                    b = x2;
                    x2 = x1;
                    evals.push(std::mem::replace(&mut f2, f1));
                    x1 = b - g * (b - a);
                    f1 = eval(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    evals.push(std::mem::replace(&mut f1, f2));
                    x2 = a + g * (b - a);
                    f2 = eval(x2);
                }
            }
            evals.push(f1);
            evals.push(f2);
        }
    }
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    evals.dedup_by(|a, b| a.0 == b.0);
    let best = pick(&evals).expect("at least one feasible point");
    let curve = evals
        .iter()
        .map(|(l, r)| match r {
            Ok(r) => CurvePoint { lambda: *l, infidelity: Some(r.infidelity), error: None },
            Err(e) => CurvePoint { lambda: *l, infidelity: None, error: Some(e.to_string()) },
        })
        .collect();
    let best = evals.swap_remove(best).1?;
    Ok(Optimized { best, curve })
}

/// One row of the reference infidelity table with its acceptance band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadlineGate {
    pub kind: GateKind,
    pub magnitude: f64,
    pub reference_infidelity: f64,
    pub reference_time_us: f64,
    /// Accepted infidelity range [lo, hi].
    pub band: (f64, f64),
    /// λ grid points across the gate-time window and golden refinements.
    pub grid_points: usize,
    pub refine: usize,
}

pub const HEADLINE: [HeadlineGate; 4] = [
    HeadlineGate { kind: GateKind::D, magnitude: 3.0, reference_infidelity: 6.2e-7, reference_time_us: 7.1, band: (0.0, 1e-5), grid_points: 25, refine: 16 },
    HeadlineGate { kind: GateKind::S, magnitude: 1.0, reference_infidelity: 1.3e-5, reference_time_us: 190.0, band: (0.0, 1e-4), grid_points: 25, refine: 12 },
    HeadlineGate { kind: GateKind::CD, magnitude: 3.0, reference_infidelity: 1.7e-1, reference_time_us: 5100.0, band: (0.06, 0.5), grid_points: 5, refine: 2 },
    HeadlineGate { kind: GateKind::CS, magnitude: 1.0, reference_infidelity: 1.1e-4, reference_time_us: 13000.0, band: (0.0, 1e-3), grid_points: 3, refine: 0 },
];

/// Gate-time windows are the reference time ± this fraction.
pub const TIME_WINDOW: f64 = 0.2;

impl HeadlineGate {
    pub fn request(&self) -> GateRequest {
        GateRequest::new(self.kind, self.magnitude)
    }

    /// Evenly spaced λ over the gate-time window, clipped to positive depths.
    pub fn window_options(&self, setup: &GateSetup, window: f64) -> Result<OptimizeOptions> {
        let g = &setup.settings.geometry;
        let opts = OptimizeOptions {
            duration_min: Some(g.to_phase(self.reference_time_us * (1.0 - window) * 1e-6)),
            duration_max: Some(g.to_phase(self.reference_time_us * (1.0 + window) * 1e-6)),
            refine: self.refine,
            ..OptimizeOptions::default()
        };
        let (lo, hi) = lambda_bounds(setup, &opts)?;
        let n = self.grid_points.max(1);
        let grid = if n == 1 { vec![0.5 * (lo + hi)] } else { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() };
        Ok(OptimizeOptions { grid: Some(grid), ..opts })
    }

    pub fn passes(&self, infidelity: f64) -> bool {
        infidelity >= self.band.0 && infidelity <= self.band.1
    }

    pub fn time_ok(&self, duration_us: f64, window: f64) -> bool {
        (duration_us / self.reference_time_us - 1.0).abs() <= window + 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs() -> QubitCoefficients<f64> {
        qubit_coefficients(&diagonalize_relative(0.36, 64).unwrap()).unwrap()
    }

    #[test]
    fn d_parameter_map_matches_gate_time() {
        let g = BeamGeometry::rb87_default();
        let t = g.to_phase(7.1e-6);
        let a = parameter_map(GateKind::D, 0.1576, t, 0.0, 0.041, &coeffs());
        assert!((a.norm() - 3.0).abs() < 0.01, "{}", a.norm());
        assert_eq!(parameter_map(GateKind::CS, 0.0, 10.0, 0.3, 0.041, &coeffs()).norm(), 0.0);
    }

    #[test]
    fn sr_map_harmonic_limit() {
        let c = qubit_coefficients(&diagonalize_relative(0.0, 64).unwrap()).unwrap();
        let g = parameter_map(GateKind::SR, 0.05, 30.0, 0.0, 0.041, &c);
        assert!((g.re - 0.05 * 30.0 * 2f64.sqrt() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_maps() {
        let c = coeffs();
        for k in GateKind::ALL {
            let t = duration_for(k, 0.07, 1.3, 0.041, &c);
            assert!((parameter_map(k, 0.07, t, 0.4, 0.041, &c).norm() - 1.3).abs() < 1e-12);
            assert!((lambda_for(k, t, 1.3, 0.041, &c) - 0.07).abs() < 1e-14);
        }
    }

    #[test]
    fn waveform_tones() {
        let z = CorrectionSettings::default();
        let d = drive_signal(GateKind::D, 1.0, 0.0, 0.0, 1.9, &z);
        assert_eq!(d.tones, vec![Tone::sin(1.0, 0.0, 1.0)]);
        let cd = drive_signal(GateKind::CD, 1.0, 0.0, 0.0, 1.9, &z);
        assert_eq!(cd.tones[0].omega, 2.9);
        assert_eq!(cd.tones[0].sign, 1.0);
        assert!((cd.tones[1].omega - 0.9).abs() < 1e-15);
        assert_eq!(cd.tones[1].sign, -1.0);
        let s = drive_signal(GateKind::S, 1.0, 0.0, 0.0, 1.9, &z);
        assert_eq!(s.tones, vec![Tone::sin(2.0, 0.0, -1.0)]);
    }

    #[test]
    fn corrections_vanish_at_zero_lambda() {
        let spec = diagonalize_relative(0.36, 64).unwrap();
        for k in [GateKind::R, GateKind::SR] {
            let c = correction_settings(k, 0.0, &spec).unwrap();
            assert_eq!(c, CorrectionSettings::default());
            let c1 = correction_settings(k, 1e-3, &spec).unwrap();
            let c2 = correction_settings(k, 2e-3, &spec).unwrap();
            assert!((c2.delta_com / c1.delta_com - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn targets_are_unitary() {
        for k in GateKind::ALL {
            let u = target_unitary(k, C64::from_polar(0.8, 0.3), 0.7, -0.9, 40).unwrap();
            assert!(u.unitarity_error() < 1e-12, "{k}: {}", u.unitarity_error());
        }
        let id = target_unitary(GateKind::D, C64::new(0.0, 0.0), 0.0, 0.0, 10).unwrap();
        assert!(id.unitarity_error() < 1e-15);
        assert!((id.matrix[(3, 3)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cd_target_makes_cat() {
        let n = 60;
        let al = C64::new(1.5, 0.0);
        let u = target_unitary(GateKind::CD, al, 0.0, 0.0, n).unwrap();
        let out = u.apply(QubitInit::Up.amplitudes(), &coherent_vec(n, C64::new(0.0, 0.0)));
        let p = coherent_vec(n, al);
        let m = coherent_vec(n, -al);
        for k in 0..n {
            assert!((out[k] - (p[k] + m[k]) * 0.5).norm() < 1e-10);
            assert!((out[n + k] - (p[k] - m[k]) * 0.5).norm() < 1e-10);
        }
    }

    #[test]
    fn s_target_variance() {
        let n = 120;
        let xi = 0.7;
        let u = target_unitary(GateKind::S, C64::new(xi, 0.0), 0.0, 0.0, n).unwrap();
        let v = u.apply(QubitInit::Up.amplitudes(), &coherent_vec(n, C64::new(0.0, 0.0)));
        let x = crate::linalg::quadrature_powers::<f64>(n, 2)[2].clone();
        let mut r2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                r2 += (v[i].conj() * v[j]).re * x[(i, j)];
            }
        }
        assert!((r2 - (-2.0 * xi).exp() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn request_json_round_trip() {
        let s = r#"{"kind":"CS","magnitude":1.0,"theta":0.2,"lambda":"optimize","u_prime":0.36}"#;
        let r: GateRequest = serde_json::from_str(s).unwrap();
        assert_eq!(r.kind, GateKind::CS);
        assert_eq!(r.lambda.fixed().unwrap(), None);
        assert!(r.corrections);
        let back: GateRequest = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let bad = GateRequest { lambda: LambdaSpec::Keyword("fast".into()), ..r.clone() };
        assert!(bad.validate().is_err());
        let neg = GateRequest { magnitude: -1.0, ..r };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn five_beam_directions_solve_targets() {
        let s = SimSettings::default();
        let c = coeffs();
        let p = layout_plan(GateKind::D, &s, &c).unwrap();
        let v = p.full.apply(&p.direction);
        assert!((v[0] - 1.0).abs() < 1e-10);
        for k in 1..5 {
            assert!(v[k].abs() < 1e-10);
        }
    }

    #[test]
    fn grid_of_one_point() {
        let mut s = SimSettings::default();
        s.n_com = Some(24);
        s.n_rel_dyn = 4;
        let r = GateRequest::new(GateKind::D, 0.5);
        let setup = GateSetup::new(&r, &s).unwrap();
        let o = optimize_lambda(&setup, &OptimizeOptions { grid: Some(vec![0.05]), ..Default::default() }).unwrap();
        assert_eq!(o.curve.len(), 1);
        assert_eq!(o.best.lambda, 0.05);
    }
}
