//! Product basis (COM Fock ⊗ dressed relative), Hamiltonian assembly and a
//! unitary fourth-order propagator.
//!
//! A polynomial amplitude V_k (units of V0) enters as V_k εx^{k−2}/4 · S_k in
//! units of ħωx, where S_k = Σ_i (x_i/x0)^k = 2^{1−k/2} Σ_{j even} C(k,j) R^{k−j} r^j.

use crate::error::{Error, Result};
use crate::linalg::{self, cdot, cnorm_sqr, sym_eigen, CVector};
use crate::relmode::RelativeSpectrum;
use crate::scalar::{lit, Real};
use crate::special::binomial;
use crate::waveform::Signal;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_N_COM: usize = 48;
pub const DEFAULT_N_REL_DYN: usize = 6;
pub const DEFAULT_STEPS_PER_PERIOD: usize = 40;
pub const CUTOFF_WARN: f64 = 1e-6;
pub const CUTOFF_ADEQUATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductBasis {
    pub n_com: usize,
    pub n_rel: usize,
}

impl ProductBasis {
    pub fn new(n_com: usize, n_rel: usize) -> Result<Self> {
        if n_com < 2 || n_rel < 2 {
            return Err(Error::BasisInadequate("need at least 2 COM and 2 relative levels".into()));
        }
        Ok(ProductBasis { n_com, n_rel })
    }

    pub fn dim(&self) -> usize {
        self.n_com * self.n_rel
    }

    #[inline]
    pub fn index(&self, n: usize, i: usize) -> usize {
        n * self.n_rel + i
    }

    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.n_rel, k % self.n_rel)
    }
}

/// Terms (weight, COM power, relative power) of S_k.
pub fn expand_symmetric_power<T: Real>(k: usize) -> Vec<(T, usize, usize)> {
    let pre = lit::<T>(2.0).powf(T::one() - T::usize(k) / lit(2.0));
    (0..=k)
        .step_by(2)
        .map(|j| (pre * binomial::<T>(k, j), k - j, j))
        .collect()
}

/// Operator tables needed to build S_k on a product basis.
#[derive(Debug, Clone)]
pub struct OperatorTables<T> {
    pub basis: ProductBasis,
    pub com_powers: Vec<DMatrix<T>>,
    pub rel_powers: Vec<DMatrix<T>>,
    pub rel_energies: Vec<T>,
}

impl<T: Real> OperatorTables<T> {
    pub fn new(basis: ProductBasis, spectrum: &RelativeSpectrum<T>, k_sim: usize) -> Result<Self> {
        if basis.n_com < k_sim.min(basis.n_com + 1) || basis.n_com <= k_sim {
            return Err(Error::BasisInadequate(format!(
                "N_com = {} too small for operator powers up to {}",
                basis.n_com, k_sim
            )));
        }
        if basis.n_rel > spectrum.n_rel() {
            return Err(Error::BasisInadequate("more dynamic relative levels than the spectrum holds".into()));
        }
        Ok(OperatorTables {
            basis,
            com_powers: linalg::quadrature_powers(basis.n_com, k_sim),
            rel_powers: spectrum.power_table(k_sim, basis.n_rel),
            rel_energies: spectrum.energies.iter().take(basis.n_rel).cloned().collect(),
        })
    }

    /// S_k on the product basis.
    pub fn symmetric_power(&self, k: usize) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.basis.dim(), self.basis.dim());
        for (w, p, q) in expand_symmetric_power::<T>(k) {
            out += self.com_powers[p].kronecker(&self.rel_powers[q]) * w;
        }
        out
    }

    /// Σ_k V_k εx^{k−2}/4 S_k for amplitudes V_1..V_K (index k−1).
    pub fn potential_operator(&self, amplitudes: &[T], eps_x: T) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.basis.dim(), self.basis.dim());
        for (idx, &v) in amplitudes.iter().enumerate() {
            let k = idx + 1;
            if v == T::zero() {
                continue;
            }
            let scale = v * eps_x.powi(k as i32 - 2) / lit(4.0);
            out += self.symmetric_power(k) * scale;
        }
        out
    }

    /// n + Ẽ_i on the diagonal.
    pub fn h0_diagonal(&self) -> DVector<T> {
        DVector::from_fn(self.basis.dim(), |k, _| {
            let (n, i) = self.basis.split(k);
            T::usize(n) + self.rel_energies[i]
        })
    }
}

#[derive(Debug, Clone)]
pub struct OperatorTerm<T> {
    pub matrix: DMatrix<T>,
    pub signal: Signal<T>,
    pub tag: String,
}

#[derive(Debug, Clone)]
pub struct DriveAssembly<T> {
    pub basis: ProductBasis,
    pub h0: DVector<T>,
    pub residual: DMatrix<T>,
    /// Orders carried in the static residual (|V_k| above 1e-12).
    pub residual_orders: Vec<usize>,
    pub terms: Vec<OperatorTerm<T>>,
}

/// Drive amplitudes per order (index k−1, already multiplied by λ) and their signal.
#[derive(Debug, Clone)]
pub struct DriveSpec<T> {
    pub amplitudes: Vec<T>,
    pub signal: Signal<T>,
    pub tag: String,
}

/// Builds H0, the static residual of the base potential, and the drive terms.
///
/// `static_amplitudes[k−1]` is V_k of the base layout; the harmonic part
/// V_2 = 2 is carried exactly by H0 and removed from the residual.
pub fn assemble<T: Real>(
    tables: &OperatorTables<T>,
    eps_x: T,
    static_amplitudes: &[T],
    drives: &[DriveSpec<T>],
) -> Result<DriveAssembly<T>> {
    let k_sim = tables.com_powers.len() - 1;
    if static_amplitudes.len() > k_sim || drives.iter().any(|d| d.amplitudes.len() > k_sim) {
        return Err(Error::BasisInadequate(format!("amplitudes beyond the tabulated order {k_sim}")));
    }
    let mut res = static_amplitudes.to_vec();
    if res.len() >= 2 {
        res[1] -= lit(2.0);
    }
    let residual_orders = res
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > lit(1e-12))
        .map(|(i, _)| i + 1)
        .collect();
    let residual = tables.potential_operator(&res, eps_x);
    let terms = drives
        .iter()
        .map(|d| OperatorTerm {
            matrix: tables.potential_operator(&d.amplitudes, eps_x),
            signal: d.signal.clone(),
            tag: d.tag.clone(),
        })
        .collect();
    Ok(DriveAssembly { basis: tables.basis, h0: tables.h0_diagonal(), residual, residual_orders, terms })
}

impl<T: Real> DriveAssembly<T> {
    pub fn max_asymmetry(&self) -> T {
        let mut worst = (&self.residual - self.residual.transpose()).amax();
        for t in &self.terms {
            worst = worst.max((&t.matrix - t.matrix.transpose()).amax());
        }
        worst
    }

    /// H0 + residual.
    pub fn static_hamiltonian(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.h0) + &self.residual
    }

    /// Full H(t) as a dense matrix.
    pub fn hamiltonian_at(&self, t: T) -> DMatrix<T> {
        let mut h = self.static_hamiltonian();
        for term in &self.terms {
            h += &term.matrix * term.signal.value(t);
        }
        h
    }

    pub fn fastest_omega(&self) -> T {
        self.terms.iter().fold(T::zero(), |a, t| a.max(t.signal.fastest_omega()))
    }
}

#[derive(Debug, Clone)]
pub struct MotionalState<T> {
    pub basis: ProductBasis,
    pub amps: CVector<T>,
    pub time: T,
}

impl<T: Real> MotionalState<T> {
    pub fn zeros(basis: ProductBasis) -> Self {
        MotionalState { basis, amps: CVector::zeros(basis.dim()), time: T::zero() }
    }

    /// |ĩ⟩|n⟩
    pub fn fock(basis: ProductBasis, n: usize, i: usize) -> Self {
        let mut s = Self::zeros(basis);
        s.amps[basis.index(n, i)] = Complex::new(T::one(), T::zero());
        s
    }

    /// Relative superposition Σ_i r_i |ĩ⟩ times the coherent COM state |α⟩
    /// (exact Poisson amplitudes, truncated at the cutoff).
    pub fn product(basis: ProductBasis, rel: &[Complex<T>], com: &[Complex<T>]) -> Self {
        let mut s = Self::zeros(basis);
        for (n, c) in com.iter().enumerate().take(basis.n_com) {
            for (i, r) in rel.iter().enumerate().take(basis.n_rel) {
                s.amps[basis.index(n, i)] = *c * *r;
            }
        }
        s
    }

    pub fn coherent(basis: ProductBasis, rel_level: usize, alpha: Complex<T>) -> Self {
        let mut rel = vec![Complex::new(T::zero(), T::zero()); basis.n_rel];
        rel[rel_level] = Complex::new(T::one(), T::zero());
        Self::product(basis, &rel, &coherent_amplitudes(basis.n_com, alpha))
    }

    pub fn norm_sqr(&self) -> T {
        cnorm_sqr(&self.amps)
    }

    pub fn overlap(&self, other: &Self) -> Complex<T> {
        cdot(&self.amps, &other.amps)
    }

    /// Population of the top two COM Fock levels.
    pub fn cutoff_population(&self) -> T {
        let b = self.basis;
        let mut p = T::zero();
        for n in b.n_com.saturating_sub(2)..b.n_com {
            for i in 0..b.n_rel {
                p += self.amps[b.index(n, i)].norm_sqr();
            }
        }
        p
    }

    /// Multiplies by exp(+i E_k T) for the given diagonal frame energies.
    pub fn to_interaction_picture(&self, frame: &DVector<T>, t: T) -> Self {
        let mut s = self.clone();
        for (k, a) in s.amps.iter_mut().enumerate() {
            let ph = frame[k] * t;
            *a *= Complex::new(ph.cos(), ph.sin());
        }
        s
    }
}

/// e^{−|α|²/2} αⁿ/√n! for n < n_max.
pub fn coherent_amplitudes<T: Real>(n_max: usize, alpha: Complex<T>) -> Vec<Complex<T>> {
    let mut out = Vec::with_capacity(n_max);
    let mut c = Complex::new((-alpha.norm_sqr() / lit(2.0)).exp(), T::zero());
    for n in 0..n_max {
        out.push(c);
        c = c * alpha / T::usize(n + 1).sqrt();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig<T> {
    /// Steps per period of the fastest tone (or of ωx when slower).
    pub steps_per_period: usize,
    pub norm_tolerance: T,
    /// Repeat with half the step and report the agreement.
    pub dt_check: bool,
    /// Cutoff populations above the warning level become errors.
    pub strict: bool,
}

impl<T: Real> Default for PropagatorConfig<T> {
    fn default() -> Self {
        PropagatorConfig {
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            norm_tolerance: lit(1e-10),
            dt_check: false,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisInfo {
    pub n_com: usize,
    pub n_rel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub norm_drift: f64,
    pub cutoff_pop: f64,
    pub steps: usize,
    pub dt: f64,
    pub basis: BasisInfo,
    /// Dimension of the subspace actually reachable from the initial state.
    pub active_dim: usize,
    /// 1 − |⟨ψ_dt|ψ_dt/2⟩|² when the half-step check ran.
    pub dt_check_infidelity: Option<f64>,
    pub warnings: Vec<String>,
}

/// Indices reachable from the support of `psi` through nonzero couplings.
fn reachable<T: Real>(psi: &CVector<T>, mats: &[&DMatrix<T>]) -> Vec<usize> {
    let n = psi.len();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&k| psi[k].norm_sqr() > T::zero()).collect();
    for &k in &stack {
        seen[k] = true;
    }
    while let Some(k) = stack.pop() {
        for m in mats {
            for j in 0..n {
                if !seen[j] && m[(j, k)] != T::zero() {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    (0..n).filter(|&k| seen[k]).collect()
}

fn submatrix<T: Real>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

struct SplitTerm<T> {
    source: usize,
    mu: DVector<T>,
    q: DMatrix<T>,
    qt: DMatrix<T>,
}

/// Splitting propagator prepared in the eigenbasis of the static Hamiltonian,
/// restricted to the subspace reachable from a given initial support.
///
/// Preparation costs two dense eigendecompositions; the result can be reused
/// for any drive signals on the same operator terms.
pub struct Propagator<T> {
    basis: ProductBasis,
    idx: Vec<usize>,
    lambda: DVector<T>,
    v: DMatrix<T>,
    terms: Vec<SplitTerm<T>>,
    signals: Vec<Signal<T>>,
    fastest: T,
}

impl<T: Real> Propagator<T> {
    pub fn new(assembly: &DriveAssembly<T>, support: &MotionalState<T>) -> Result<Self> {
        if support.basis != assembly.basis {
            return Err(Error::InvalidInput("state and assembly bases differ".into()));
        }
        let hs = assembly.static_hamiltonian();
        let mut mats: Vec<&DMatrix<T>> = vec![&hs];
        for t in &assembly.terms {
            mats.push(&t.matrix);
        }
        let idx = reachable(&support.amps, &mats);
        let (lambda, v) = sym_eigen(&submatrix(&hs, &idx))?;
        let mut terms = Vec::new();
        for (source, t) in assembly.terms.iter().enumerate() {
            let m = submatrix(&t.matrix, &idx);
            if m.amax() == T::zero() {
                continue;
            }
            let mt = v.transpose() * m * &v;
            let (mu, q) = sym_eigen(&mt)?;
            let qt = q.transpose();
            terms.push(SplitTerm { source, mu, q, qt });
        }
        Ok(Propagator {
            basis: assembly.basis,
            idx,
            lambda,
            v,
            terms,
            signals: assembly.terms.iter().map(|t| t.signal.clone()).collect(),
            fastest: assembly.fastest_omega(),
        })
    }

    pub fn active_dim(&self) -> usize {
        self.idx.len()
    }

    /// Step count for a duration: `steps_per_period` steps per period of the
    /// fastest tone, or of ωx when all tones are slower.
    pub fn step_count(&self, duration: T, steps_per_period: usize) -> usize {
        step_count_for(self.fastest, duration, steps_per_period)
    }

    fn step_count_with(&self, signals: &[Signal<T>], duration: T, steps_per_period: usize) -> usize {
        let fastest = signals.iter().fold(T::zero(), |a, s| a.max(s.fastest_omega()));
        step_count_for(fastest, duration, steps_per_period)
    }
    /// Symmetric second-order step A(s/2) B(s) A(s/2).
    fn strang(&self, sig: &[Signal<T>], w: &mut Work<T>, ph: &Phasors<T>, t: T, s: T) {
        let half = s / lit(2.0);
        w.rotate(ph);
        let tm = t + half;
        let n = self.terms.len();
        let amp = |k: usize| sig[self.terms[k].source].value(tm);
        if n > 0 {
            for k in 0..n - 1 {
                w.kick(&self.terms[k], amp(k), half);
            }
            w.kick(&self.terms[n - 1], amp(n - 1), s);
            for k in (0..n - 1).rev() {
                w.kick(&self.terms[k], amp(k), half);
            }
        }
        w.rotate(ph);
    }

    fn to_lab(&self, w: &Work<T>) -> CVector<T> {
        let fr = &self.v * &w.re;
        let fi = &self.v * &w.im;
        let mut out = CVector::zeros(self.basis.dim());
        for (k, &g) in self.idx.iter().enumerate() {
            out[g] = Complex::new(fr[k], fi[k]);
        }
        out
    }

    /// Fourth-order (triple-jump) composition of Strang steps.
    /// Returns the final lab-frame amplitudes, norm drift and the largest
    /// cutoff population seen at the checkpoints.
    fn run_steps(&self, sig: &[Signal<T>], psi: &MotionalState<T>, duration: T, steps: usize, tol: T) -> Result<(CVector<T>, T, T)> {
        let n = self.idx.len();
        let mut re = DVector::zeros(n);
        let mut im = DVector::zeros(n);
        for (k, &g) in self.idx.iter().enumerate() {
            re[k] = psi.amps[g].re;
            im[k] = psi.amps[g].im;
        }
        let vt = self.v.transpose();
        let mut w = Work { re: &vt * re, im: &vt * im, tr: DVector::zeros(n), ti: DVector::zeros(n) };
        let norm0 = w.norm_sqr();
        let c1 = T::one() / (lit::<T>(2.0) - lit::<T>(2.0).powf(T::one() / lit(3.0)));
        let c0 = T::one() - lit::<T>(2.0) * c1;
        let h = if steps == 0 { T::zero() } else { duration / T::usize(steps) };
        let p1 = Phasors::new(&self.lambda, c1 * h / lit(2.0));
        let p0 = Phasors::new(&self.lambda, c0 * h / lit(2.0));
        let check_every = (steps / 32).max(1);
        let mut drift = T::zero();
        let mut cutoff = psi.cutoff_population();
        for step in 0..steps {
            let t = psi.time + h * T::usize(step);
            self.strang(sig, &mut w, &p1, t, c1 * h);
            self.strang(sig, &mut w, &p0, t + c1 * h, c0 * h);
            self.strang(sig, &mut w, &p1, t + (c1 + c0) * h, c1 * h);
            if (step + 1) % check_every == 0 || step + 1 == steps {
                drift = (w.norm_sqr() - norm0).abs();
                if !(drift <= tol) {
                    return Err(Error::NormDrift { drift: drift.to_f64(), tolerance: tol.to_f64(), step: step + 1 });
                }
                let lab = MotionalState { basis: self.basis, amps: self.to_lab(&w), time: t + h };
                cutoff = cutoff.max(lab.cutoff_population());
            }
        }
        Ok((self.to_lab(&w), drift, cutoff))
    }

    /// Integrates i dψ/dt = H(t) ψ over [state.time, state.time + duration] in the lab frame.
    pub fn run(&self, state: &MotionalState<T>, duration: T, config: &PropagatorConfig<T>) -> Result<(MotionalState<T>, Diagnostics)> {
        self.run_with(&self.signals, state, duration, config)
    }

    /// As [`Propagator::run`] with replacement drive signals, one per assembled term.
    pub fn run_with(
        &self,
        signals: &[Signal<T>],
        state: &MotionalState<T>,
        duration: T,
        config: &PropagatorConfig<T>,
    ) -> Result<(MotionalState<T>, Diagnostics)> {
        if signals.len() != self.signals.len() {
            return Err(Error::InvalidInput("one signal per drive term required".into()));
        }
        if !(duration >= T::zero()) {
            return Err(Error::InvalidInput("duration must be non-negative".into()));
        }
        if state.basis != self.basis {
            return Err(Error::InvalidInput("state and propagator bases differ".into()));
        }
        if config.steps_per_period < 40 {
            return Err(Error::InvalidInput("steps_per_period must be >= 40".into()));
        }
        let outside = (0..state.amps.len())
            .filter(|k| self.idx.binary_search(k).is_err())
            .any(|k| state.amps[k].norm_sqr() > T::zero());
        if outside {
            return Err(Error::InvalidInput("state has support outside the prepared subspace".into()));
        }
        let steps = if duration == T::zero() { 0 } else { self.step_count_with(signals, duration, config.steps_per_period) };
        let (amps, drift, cutoff) = self.run_steps(signals, state, duration, steps, config.norm_tolerance)?;
        let out = MotionalState { basis: state.basis, amps, time: state.time + duration };
        let mut warnings = Vec::new();
        if cutoff > lit(CUTOFF_WARN) {
            if config.strict {
                return Err(Error::CutoffPopulation { pop: cutoff.to_f64(), limit: CUTOFF_WARN });
            }
            warnings.push(format!("COM cutoff population {:.2e}", cutoff.to_f64()));
        } else if cutoff > lit(CUTOFF_ADEQUATE) {
            warnings.push(format!("COM cutoff population {:.2e} above adequacy level", cutoff.to_f64()));
        }
        let mut dt_check_infidelity = None;
        if config.dt_check && steps > 0 {
            let (fine, _, _) = self.run_steps(signals, state, duration, 2 * steps, config.norm_tolerance)?;
            let f = cdot(&fine, &out.amps).norm_sqr();
            dt_check_infidelity = Some((T::one() - f).to_f64());
        }
        let dt = if steps == 0 { T::zero() } else { duration / T::usize(steps) };
        let diag = Diagnostics {
            norm_drift: drift.to_f64(),
            cutoff_pop: cutoff.to_f64(),
            steps,
            dt: dt.to_f64(),
            basis: BasisInfo { n_com: state.basis.n_com, n_rel: state.basis.n_rel },
            active_dim: self.idx.len(),
            dt_check_infidelity,
            warnings,
        };
        Ok((out, diag))
    }
}

/// cos/sin of E·s, nudged by an ulp where that brings cos² + sin² closer to 1.
/// The same factors are applied every step, so their rounding would
/// otherwise add up to a steady norm drift.
struct Phasors<T> {
    cos: DVector<T>,
    sin: DVector<T>,
}

impl<T: Real> Phasors<T> {
    fn new(e: &DVector<T>, s: T) -> Self {
        let n = e.len();
        let mut cos = DVector::zeros(n);
        let mut sin = DVector::zeros(n);
        for k in 0..n {
            let (sn, cs) = (e[k] * s).sin_cos();
            let (mut best, mut err) = ((cs, sn), unit_error(cs, sn));
            let uc = cs.abs() * T::default_epsilon();
            let us = sn.abs() * T::default_epsilon();
            for dc in [-uc, T::zero(), uc] {
                for ds in [-us, T::zero(), us] {
                    let cand = (cs + dc, sn + ds);
                    let e2 = unit_error(cand.0, cand.1);
                    if e2 < err {
                        best = cand;
                        err = e2;
                    }
                }
            }
            cos[k] = best.0;
            sin[k] = best.1;
        }
        Phasors { cos, sin }
    }
}

/// |c² + s² − 1| in double-word arithmetic.
fn unit_error<T: Real>(c: T, s: T) -> T {
    let two_sum = |a: T, b: T| {
        let x = a + b;
        let z = x - a;
        (x, (a - (x - z)) + (b - z))
    };
    let p1 = c * c;
    let e1 = c.mul_add(c, -p1);
    let p2 = s * s;
    let e2 = s.mul_add(s, -p2);
    let (x, y) = two_sum(p1, p2);
    let (u, v) = two_sum(x, -T::one());
    (u + (v + y + e1 + e2)).abs()
}

fn step_count_for<T: Real>(fastest: T, duration: T, steps_per_period: usize) -> usize {
    let dt = T::two_pi() / fastest.max(T::one()) / T::usize(steps_per_period.max(1));
    (duration / dt).ceil().to_f64().max(1.0) as usize
}

struct Work<T> {
    re: DVector<T>,
    im: DVector<T>,
    tr: DVector<T>,
    ti: DVector<T>,
}

impl<T: Real> Work<T> {
    fn rotate(&mut self, ph: &Phasors<T>) {
        for k in 0..self.re.len() {
            let (cs, sn) = (ph.cos[k], ph.sin[k]);
            let (a, b) = (self.re[k], self.im[k]);
            // (a + ib)(cs − i sn)
            self.re[k] = a * cs + b * sn;
            self.im[k] = b * cs - a * sn;
        }
    }

    fn kick(&mut self, term: &SplitTerm<T>, amp: T, s: T) {
        self.tr.gemv(T::one(), &term.qt, &self.re, T::zero());
        self.ti.gemv(T::one(), &term.qt, &self.im, T::zero());
        for k in 0..self.tr.len() {
            let (sn, cs) = (amp * term.mu[k] * s).sin_cos();
            let (a, b) = (self.tr[k], self.ti[k]);
            self.tr[k] = a * cs + b * sn;
            self.ti[k] = b * cs - a * sn;
        }
        self.re.gemv(T::one(), &term.q, &self.tr, T::zero());
        self.im.gemv(T::one(), &term.q, &self.ti, T::zero());
    }

    fn norm_sqr(&self) -> T {
        self.re.norm_squared() + self.im.norm_squared()
    }
}

/// Integrates i dψ/dt = H(t) ψ over [state.time, state.time + duration] in the lab frame.
pub fn propagate<T: Real>(
    state: &MotionalState<T>,
    assembly: &DriveAssembly<T>,
    duration: T,
    config: &PropagatorConfig<T>,
) -> Result<(MotionalState<T>, Diagnostics)> {
    Propagator::new(assembly, state)?.run(state, duration, config)
}

/// F = |⟨U ψ0 | e^{+i H_frame T} ψ_T⟩|², with `target` = U ψ0.
pub fn gate_fidelity<T: Real>(final_lab: &MotionalState<T>, target: &CVector<T>, frame: &DVector<T>, duration: T) -> T {
    let psi_i = final_lab.to_interaction_picture(frame, duration);
    let f = cdot(target, &psi_i.amps).norm_sqr();
    f.max(T::zero()).min(T::one())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub mean_n: f64,
    pub p_up: f64,
    pub p_down: f64,
    pub leakage: f64,
    pub mean_r_re: f64,
    pub mean_r_im: f64,
    pub mean_r2: f64,
}

/// ⟨a†a⟩, qubit populations, leakage, ⟨R⟩ (real part; imaginary part is
/// roundoff) and ⟨R²⟩ for R = (a + a†)/√2.
pub fn observables<T: Real>(state: &MotionalState<T>) -> Observables {
    let b = state.basis;
    let mut mean_n = T::zero();
    let mut pops = vec![T::zero(); b.n_rel];
    for n in 0..b.n_com {
        for i in 0..b.n_rel {
            let p = state.amps[b.index(n, i)].norm_sqr();
            mean_n += T::usize(n) * p;
            pops[i] += p;
        }
    }
    let rp = linalg::quadrature_powers::<T>(b.n_com, 2);
    let mut r1 = Complex::new(T::zero(), T::zero());
    let mut r2 = Complex::new(T::zero(), T::zero());
    for i in 0..b.n_rel {
        for n in 0..b.n_com {
            let an = state.amps[b.index(n, i)];
            for m in n.saturating_sub(2)..(n + 3).min(b.n_com) {
                let am = state.amps[b.index(m, i)].conj();
                r1 += am * an * rp[1][(m, n)];
                r2 += am * an * rp[2][(m, n)];
            }
        }
    }
    let leak = pops.iter().skip(2).fold(T::zero(), |a, &p| a + p);
    Observables {
        mean_n: mean_n.to_f64(),
        p_up: pops[0].to_f64(),
        p_down: pops.get(1).cloned().unwrap_or(T::zero()).to_f64(),
        leakage: leak.to_f64(),
        mean_r_re: r1.re.to_f64(),
        mean_r_im: r1.im.to_f64(),
        mean_r2: r2.re.to_f64(),
    }
}

/// COM reduced density matrix Tr_rel |ψ⟩⟨ψ|.
pub fn com_density<T: Real>(state: &MotionalState<T>) -> DMatrix<Complex<T>> {
    let b = state.basis;
    DMatrix::from_fn(b.n_com, b.n_com, |m, n| {
        (0..b.n_rel).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
            acc + state.amps[b.index(m, i)] * state.amps[b.index(n, i)].conj()
        })
    })
}

/// Tr ρ² of the COM reduced state.
pub fn com_purity<T: Real>(state: &MotionalState<T>) -> T {
    let rho = com_density(state);
    (&rho * &rho).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relmode::diagonalize_relative;
    use crate::waveform::Tone;

    fn tables(n_com: usize, n_rel: usize, k: usize) -> OperatorTables<f64> {
        let spec = diagonalize_relative(0.36, 64).unwrap();
        OperatorTables::new(ProductBasis::new(n_com, n_rel).unwrap(), &spec, k).unwrap()
    }

    #[test]
    fn symmetric_power_terms() {
        let s1 = expand_symmetric_power::<f64>(1);
        assert_eq!(s1.len(), 1);
        assert!((s1[0].0 - 2f64.sqrt()).abs() < 1e-15 && s1[0].1 == 1);
        let s2 = expand_symmetric_power::<f64>(2);
        assert_eq!(s2, vec![(1.0, 2, 0), (1.0, 0, 2)]);
        let s3 = expand_symmetric_power::<f64>(3);
        let r = 1.0 / 2f64.sqrt();
        assert!((s3[0].0 - r).abs() < 1e-15 && s3[0].1 == 3);
        assert!((s3[1].0 - 3.0 * r).abs() < 1e-15 && s3[1].1 == 1 && s3[1].2 == 2);
    }

    #[test]
    fn cubic_term_matches_ladder_form() {
        // (3R r² + R³)/√2 with R = (a+a†)/√2 equals 3/2 (a+a†) r² + 1/4 (a+a†)³
        let t = tables(12, 4, 3);
        let s3 = t.symmetric_power(3);
        let x = &t.com_powers[1] * 2f64.sqrt();
        let x3 = linalg::quadrature_powers::<f64>(12, 3)[3].clone() * 2f64.powf(1.5);
        let other = x.kronecker(&t.rel_powers[2]) * 1.5 + x3.kronecker(&DMatrix::identity(4, 4)) * 0.25;
        assert!((s3 - other).amax() < 1e-12);
    }

    #[test]
    fn zero_drive_preserves_eigenstates() {
        let t = tables(10, 4, 4);
        let a = assemble(&t, 0.041, &[0.0, 2.0], &[]).unwrap();
        let psi = MotionalState::fock(t.basis, 3, 1);
        let (out, d) = propagate(&psi, &a, 37.3, &PropagatorConfig::default()).unwrap();
        for k in 0..t.basis.dim() {
            let expect = if k == t.basis.index(3, 1) { 1.0 } else { 0.0 };
            assert!((out.amps[k].norm_sqr() - expect).abs() < 1e-12);
        }
        assert!(d.norm_drift < 1e-12);
        let f = gate_fidelity(&out, &psi.amps, &a.h0, 37.3);
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_observables() {
        let b = ProductBasis::new(30, 2).unwrap();
        let s = MotionalState::coherent(b, 0, Complex::new(1.0f64, 0.0));
        let o = observables(&s);
        assert!((o.mean_n - 1.0).abs() < 1e-12);
        assert!((o.mean_r_re - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(o.leakage, 0.0);
        let g = observables(&MotionalState::<f64>::fock(b, 0, 0));
        assert_eq!(g.mean_n, 0.0);
        assert!((g.mean_r2 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn resonant_drive_matches_dense_reference() {
        // compare the splitting integrator against a fine dense exponential-midpoint run
        let t = tables(12, 3, 4);
        let drive = DriveSpec {
            amplitudes: vec![0.002, 0.0, 0.0, 0.0],
            signal: Signal::new(vec![Tone::sin(1.0, 0.3, 1.0)]),
            tag: "order-1".into(),
        };
        let a = assemble(&t, 0.041, &[0.0, 2.0, 0.0, 0.01], &[drive]).unwrap();
        let psi = MotionalState::fock(t.basis, 0, 0);
        let dur = 6.0;
        let (out, _) = propagate(&psi, &a, dur, &PropagatorConfig::default()).unwrap();
        let n = 6000;
        let h = dur / n as f64;
        let mut y = psi.amps.clone();
        for s in 0..n {
            let hm = a.hamiltonian_at((s as f64 + 0.5) * h);
            let g = linalg::to_complex(&hm) * Complex::new(0.0, -h);
            y = linalg::expm(&g) * y;
        }
        let f = cdot(&y, &out.amps).norm_sqr();
        assert!(1.0 - f < 1e-8, "1-F = {}", 1.0 - f);
    }

    #[test]
    fn assembly_is_symmetric() {
        let t = tables(16, 4, 8);
        let drive = DriveSpec { amplitudes: vec![0.1; 8], signal: Signal::dc(), tag: "all".into() };
        let a = assemble(&t, 0.041, &[0.0, 2.0, 0.0, 0.0, 0.0, -0.003, 0.0, -0.37], &[drive]).unwrap();
        assert!(a.max_asymmetry() < 1e-13);
        assert_eq!(a.residual_orders, vec![6, 8]);
    }

    #[test]
    fn small_com_basis_rejected() {
        let spec = diagonalize_relative(0.36, 64).unwrap();
        let r = OperatorTables::<f64>::new(ProductBasis::new(10, 4).unwrap(), &spec, 14);
        assert!(matches!(r, Err(Error::BasisInadequate(_))));
    }
}
