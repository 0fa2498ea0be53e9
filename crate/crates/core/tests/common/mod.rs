//! Property checks shared by the proptest suite and the acceptance harness.
//! Each check takes its sampled inputs and reports the first violation.
#![allow(dead_code)]

use motionq::beamforge::{effective_potential, DEFAULT_K_SIM, effective_potential_quadrature, AxialSeries, BeamGeometry};
use motionq::dynamics::{assemble, propagate, DriveSpec, MotionalState, OperatorTables, ProductBasis, PropagatorConfig};
use motionq::gatecat::{GateKind, GateRequest, GateSetup, SimSettings};
use motionq::linalg::sym_eigen;
use motionq::relmode::{diagonalize_relative, exact_energies, perturbative_energies};
use motionq::tomoscope::{characteristic, reconstruct, GridSpec, Mode, ModePair};
use motionq::waveform::{Signal, Tone};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use std::f64::consts::PI;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// beamforge

/// c_m(−ζ) = (−1)^m c_m(ζ).
pub fn coefficient_parity(m: usize, zeta: f64, eps_y: f64, eps_z: f64) -> Check {
    let s = AxialSeries::<f64>::from_eps(eps_y, eps_z);
    let (a, b) = match (s.coefficient(m, zeta), s.coefficient(m, -zeta)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(_), Err(_)) => return Ok(()),
        _ => return Err(format!("c_{m} converges on one side of zeta = {zeta} only")),
    };
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    ensure!((b - sign * a).abs() <= 1e-12 * a.abs().max(1.0), "c_{m}({zeta}) = {a}, c_{m}(-zeta) = {b}");
    Ok(())
}

/// Truncated series against direct quadrature of the beam-averaged potential.
pub fn quadrature_oracle(x: f64, zeta: f64, depth: f64, eps_y: f64, eps_z: f64) -> Check {
    let g = BeamGeometry { eps_y, eps_z, ..BeamGeometry::<f64>::rb87_default() };
    let s = effective_potential(x, &[zeta], &[depth], &g, DEFAULT_K_SIM).map_err(err)?;
    let q = effective_potential_quadrature(x, &[zeta], &[depth], &g);
    let tol = 1e-10 * depth + 10.0 * s.tail_estimate;
    ensure!((s.value - q).abs() <= tol, "x {x}, zeta {zeta}: series {} vs quadrature {q}", s.value);
    Ok(())
}

// relmode

/// dE_i/du′ equals ⟨i|√π δ|i⟩ ≥ 0 (finite difference against the state expectation).
pub fn hellmann_feynman(u: f64) -> Check {
    let n = 48;
    let h = 1e-5;
    let s = diagonalize_relative(u, n).map_err(err)?;
    let sp = diagonalize_relative(u + h, n).map_err(err)?;
    let sm = diagonalize_relative((u - h).max(0.0), n).map_err(err)?;
    let chi: Vec<f64> = (0..n).map(motionq::relmode::contact_amplitude::<f64>).collect();
    for i in 0..3 {
        let overlap: f64 = (0..n).map(|m| s.vectors[(m, i)] * chi[m]).sum();
        let slope = overlap * overlap;
        let fd = (sp.energies[i] - sm.energies[i]) / (u + h - (u - h).max(0.0));
        ensure!(slope >= 0.0 && fd >= 0.0, "level {i} decreasing at u' = {u}");
        ensure!((slope - fd).abs() <= 1e-6 * slope.max(1e-3), "level {i} at u' = {u}: <delta> {slope} vs dE/du {fd}");
    }
    Ok(())
}

/// Truncated energies lie above the exact ones and fall as the basis grows.
pub fn variational_bound(u: f64, n_rel: usize) -> Check {
    let exact = exact_energies(u, 3).map_err(err)?;
    let small = diagonalize_relative(u, n_rel).map_err(err)?;
    let big = diagonalize_relative(u, 2 * n_rel).map_err(err)?;
    for i in 0..3 {
        ensure!(big.energies[i] >= exact[i] - 1e-12, "level {i}: N = {} below exact", 2 * n_rel);
        ensure!(small.energies[i] >= big.energies[i] - 1e-12, "level {i}: N = {n_rel} below N = {}", 2 * n_rel);
    }
    Ok(())
}

/// Quadratic-order energies miss the exact ones by O(u′³).
pub fn perturbative_scaling(u: f64) -> Check {
    let exact = exact_energies(u, 3).map_err(err)?;
    let pert = perturbative_energies(u);
    for i in 0..3 {
        let r = (exact[i] - pert[i]).abs();
        ensure!(r <= 0.6 * u.powi(3), "level {i} at u' = {u}: residual {r:.3e} vs u'^3 {:.3e}", u.powi(3));
    }
    Ok(())
}

// dynamics

fn tables(u: f64, n_com: usize, n_rel: usize, k_sim: usize) -> Result<OperatorTables<f64>, String> {
    let spec = diagonalize_relative(u, 32).map_err(err)?;
    OperatorTables::new(ProductBasis::new(n_com, n_rel).map_err(err)?, &spec, k_sim).map_err(err)
}

fn normalized(basis: ProductBasis, re: &[f64], im: &[f64]) -> MotionalState<f64> {
    let mut amps = DVector::from_fn(basis.dim(), |k, _| C64::new(re[k % re.len()], im[k % im.len()]));
    let norm = amps.norm();
    amps /= C64::new(norm, 0.0);
    MotionalState { basis, amps, time: 0.0 }
}

/// Static residual and drive operators are real symmetric.
pub fn hermiticity(u: f64, statics: &[f64], drive: &[f64]) -> Check {
    let t = tables(u, 16, 4, 8)?;
    let sig = Signal::new(vec![Tone::cos(1.9, 0.3, 1.0)]);
    let spec = DriveSpec { amplitudes: drive.to_vec(), signal: sig, tag: "p".into() };
    let a = assemble(&t, 0.041, statics, &[spec]).map_err(err)?;
    ensure!(a.max_asymmetry() <= 1e-12, "asymmetry {:.3e}", a.max_asymmetry());
    let h = a.hamiltonian_at(0.7);
    ensure!((&h - h.transpose()).amax() <= 1e-12, "H(t) not symmetric");
    Ok(())
}

/// Driven propagation preserves the norm.
pub fn unitarity(u: f64, drive: &[f64], omega: f64, duration: f64, re: &[f64], im: &[f64]) -> Check {
    let t = tables(u, 16, 4, 8)?;
    let sig = Signal::new(vec![Tone::sin(omega, 0.0, 1.0)]);
    let spec = DriveSpec { amplitudes: drive.to_vec(), signal: sig, tag: "p".into() };
    let a = assemble(&t, 0.041, &[0.0, 2.0], &[spec]).map_err(err)?;
    let psi = normalized(t.basis, re, im);
    let (out, diag) = propagate(&psi, &a, duration, &PropagatorConfig::default()).map_err(err)?;
    let drift = (out.norm_sqr() - 1.0).abs();
    ensure!(drift <= 1e-10 && diag.norm_drift <= 1e-10, "norm drift {drift:.3e}");
    Ok(())
}

/// Undriven harmonic evolution is undone exactly by the H0 frame.
pub fn frame_consistency(u: f64, duration: f64, re: &[f64], im: &[f64]) -> Check {
    let t = tables(u, 12, 4, 4)?;
    let a = assemble(&t, 0.041, &[0.0, 2.0], &[]).map_err(err)?;
    let psi = normalized(t.basis, re, im);
    let (out, _) = propagate(&psi, &a, duration, &PropagatorConfig::default()).map_err(err)?;
    let back = out.to_interaction_picture(&a.h0, duration);
    let dev = (&back.amps - &psi.amps).camax();
    ensure!(dev <= 1e-12, "frame round trip off by {dev:.3e}");
    Ok(())
}

/// Eigenstates of the static Hamiltonian only pick up a phase.
pub fn eigenstate_stationarity(u: f64, statics: &[f64], level: usize, duration: f64) -> Check {
    let t = tables(u, 16, 4, 8)?;
    let a = assemble(&t, 0.041, statics, &[]).map_err(err)?;
    let (e, v) = sym_eigen(&a.static_hamiltonian()).map_err(err)?;
    let k = level % e.len();
    let amps = DVector::from_fn(t.basis.dim(), |i, _| C64::new(v[(i, k)], 0.0));
    let psi = MotionalState { basis: t.basis, amps, time: 0.0 };
    let (out, _) = propagate(&psi, &a, duration, &PropagatorConfig::default()).map_err(err)?;
    let expect = &psi.amps * C64::from_polar(1.0, -e[k] * duration);
    let dev = (&out.amps - expect).camax();
    ensure!(dev <= 1e-10, "eigenstate {k} moved by {dev:.3e}");
    Ok(())
}

// gatecat

fn d_setup(magnitude: f64, theta: f64) -> Result<GateSetup, String> {
    let req = GateRequest { theta, ..GateRequest::new(GateKind::D, magnitude) };
    GateSetup::new(&req, &SimSettings::default()).map_err(err)
}

/// D(α e^{iθ}) followed by D(α e^{i(θ+π)}) returns the initial state.
pub fn displacement_inverse(magnitude: f64, theta: f64) -> Check {
    let fwd = d_setup(magnitude, theta)?;
    let rev = d_setup(magnitude, theta + std::f64::consts::PI)?;
    // a duration of two trap periods sits near a fidelity optimum
    let lambda = fwd.lambda_for(4.0 * std::f64::consts::PI);
    let (out, _, plan, dur) = fwd.evolve(&fwd.initial, lambda).map_err(err)?;
    let mut mid = out.to_interaction_picture(&fwd.frame_energies(&plan.corrections), dur);
    mid.time = 0.0;
    let (out, _, plan, dur) = rev.evolve(&mid, lambda).map_err(err)?;
    let end = out.to_interaction_picture(&rev.frame_energies(&plan.corrections), dur);
    let f = end.overlap(&fwd.initial).norm_sqr();
    ensure!(f >= 1.0 - 1e-5, "|alpha| {magnitude}, theta {theta}: round-trip fidelity {f}");
    Ok(())
}

/// θ → θ + π flips the achieved displacement and leaves the fidelity alone.
pub fn phase_covariance(magnitude: f64, theta: f64, lambda: f64) -> Check {
    let a = d_setup(magnitude, theta)?.run(lambda).map_err(err)?;
    let b = d_setup(magnitude, theta + std::f64::consts::PI)?.run(lambda).map_err(err)?;
    let (za, zb) = match (a.achieved_complex, b.achieved_complex) {
        (Some(x), Some(y)) => (C64::new(x[0], x[1]), C64::new(y[0], y[1])),
        _ => return Err("no displacement estimate".into()),
    };
    ensure!((za + zb).norm() <= 1e-3 * magnitude, "achieved {za} and {zb} not opposite");
    ensure!((za.norm() - zb.norm()).abs() <= 1e-3, "magnitudes {} vs {}", za.norm(), zb.norm());
    ensure!((a.infidelity - b.infidelity).abs() <= 1e-6, "infidelity {} vs {}", a.infidelity, b.infidelity);
    Ok(())
}

// tomoscope

/// Random state on 5 COM levels and even relative levels 0, 2, 4.
pub fn mode_pair(re: &[f64], im: &[f64]) -> ModePair {
    let mut amps = DMatrix::<C64>::zeros(5, 5);
    let mut idx = 0;
    for n in 0..5 {
        for k in [0, 2, 4] {
            amps[(n, k)] = C64::new(re[idx % re.len()], im[idx % im.len()]);
            idx += 1;
        }
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    ModePair::new(amps / C64::new(norm, 0.0)).expect("normalized")
}

/// Protocol reconstruction against direct ⟨ψ|D|ψ⟩, plus χ(0) = 1,
/// χ_R(−β) = χ_R(β)* and Im χ_r = 0.
pub fn characteristic_properties(psi: &ModePair, extent: f64) -> Check {
    let grid = reconstruct(psi, &GridSpec { extent, spacing: extent / 3.0 }).map_err(err)?;
    for i in 0..grid.chi_com.len() {
        let b = grid.beta(i);
        let com = characteristic(psi, b, Mode::Com).map_err(err)?;
        let rel = characteristic(psi, b, Mode::Rel).map_err(err)?;
        ensure!((grid.chi_com[i] - com).norm() <= 1e-10, "chi_R at {b}: {} vs {com}", grid.chi_com[i]);
        ensure!((grid.chi_rel[i] - rel.re).abs() <= 1e-10, "chi_r at {b}: {} vs {}", grid.chi_rel[i], rel.re);
        ensure!(rel.im.abs() <= 1e-12, "chi_r at {b} has imaginary part {}", rel.im);
    }
    let o = grid.origin();
    ensure!((grid.chi_com[o] - C64::new(1.0, 0.0)).norm() <= 1e-12, "chi_R(0) = {}", grid.chi_com[o]);
    ensure!((grid.chi_rel[o] - 1.0).abs() <= 1e-12, "chi_r(0) = {}", grid.chi_rel[o]);
    ensure!(grid.hermitian_defect() <= 1e-12, "hermitian defect {:.3e}", grid.hermitian_defect());
    Ok(())
}

// sampled suite

/// Runs `check` on `cases` deterministic draws from `strategy`, shrinking on failure.
fn sample<S>(cases: u32, strategy: S, check: impl Fn(S::Value) -> Check) -> Check
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, |v| check(v).map_err(TestCaseError::fail)).map_err(|e| match e {
        TestError::Fail(why, input) => format!("{why} (input {input:?})"),
        TestError::Abort(why) => why.to_string(),
    })
}

fn amps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 15)
}

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    /// Draws per run.
    pub cases: u32,
    pub run: fn(u32) -> Check,
}

pub const SUITE: [Property; 12] = [
    Property { module: "beamforge", name: "coefficient parity", cases: 64, run: |n| {
        sample(n, (0usize..13, -2.0..2.0f64, 0.0..0.05f64, 0.0..0.05f64), |(m, z, ey, ez)| coefficient_parity(m, z, ey, ez))
    } },
    Property { module: "beamforge", name: "series vs quadrature", cases: 16, run: |n| {
        sample(n, (-0.5..0.5f64, -1.2..1.2f64, 0.5..3.0f64, 0.0..0.05f64, 0.0..0.05f64), |(x, z, d, ey, ez)| quadrature_oracle(x, z, d, ey, ez))
    } },
    Property { module: "relmode", name: "Hellmann-Feynman slope", cases: 64, run: |n| sample(n, 0.01..1.2f64, hellmann_feynman) },
    Property { module: "relmode", name: "variational bound", cases: 64, run: |n| {
        sample(n, (0.0..1.2f64, 8usize..64), |(u, k)| variational_bound(u, k))
    } },
    Property { module: "relmode", name: "cubic perturbative residual", cases: 64, run: |n| sample(n, 0.05..0.4f64, perturbative_scaling) },
    Property { module: "dynamics", name: "hermiticity", cases: 64, run: |n| {
        let v = |lo: f64, hi: f64| prop::collection::vec(lo..hi, 8);
        sample(n, (0.0..1.0f64, v(-0.5, 0.5), v(-1.0, 1.0)), |(u, s, d)| hermiticity(u, &s, &d))
    } },
    Property { module: "dynamics", name: "unitarity", cases: 16, run: |n| {
        let drive = prop::collection::vec(-0.5..0.5f64, 6);
        sample(n, (0.0..1.0f64, drive, 0.5..4.0f64, 0.0..20.0f64, amps(), amps()), |(u, d, w, t, re, im)| unitarity(u, &d, w, t, &re, &im))
    } },
    Property { module: "dynamics", name: "frame consistency", cases: 16, run: |n| {
        sample(n, (0.0..1.0f64, 0.0..50.0f64, amps(), amps()), |(u, t, re, im)| frame_consistency(u, t, &re, &im))
    } },
    Property { module: "dynamics", name: "eigenstate stationarity", cases: 16, run: |n| {
        let statics = prop::collection::vec(-0.3..0.3f64, 6);
        sample(n, (0.0..1.0f64, statics, 0usize..64, 0.0..20.0f64), |(u, s, k, t)| eigenstate_stationarity(u, &s, k, t))
    } },
    Property { module: "gatecat", name: "displacement inverse", cases: 4, run: |n| {
        sample(n, (0.3..1.5f64, 0.0..2.0 * PI), |(a, t)| displacement_inverse(a, t))
    } },
    Property { module: "gatecat", name: "phase covariance", cases: 4, run: |n| {
        sample(n, (0.5..1.5f64, 0.0..2.0 * PI, 0.02..0.08f64), |(a, t, l)| phase_covariance(a, t, l))
    } },
    Property { module: "tomoscope", name: "characteristic function", cases: 16, run: |n| {
        sample(n, (amps(), amps(), 0.5..2.5f64), |(re, im, e)| characteristic_properties(&mode_pair(&re, &im), e))
    } },
];
