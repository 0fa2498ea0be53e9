//! Time-averaged 1D potential of a stroboscopic Gaussian tweezer and the
//! trap-depth solves that realize target polynomial amplitudes.
//!
//! A beam at dimensionless position ζ (units of W) with depth U contributes
//! `U Σ_m c_m(ζ) x'^m` to the potential seen by an atom whose transverse motion
//! is frozen in the y/z ground states, with `x' = x/W = εx x/x0`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{lit, Real};
use crate::special::{binom_minus_half, binomial, factorial, integrate};
use crate::waveform::{sample_step, Signal};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const S_MAX: usize = 40;
pub const T_MAX: usize = 12;
/// Largest |ζ| accepted by the default truncation.
pub const ZETA_LIMIT: f64 = 2.5;
pub const DEFAULT_K_SIM: usize = 14;

const HBAR: f64 = 1.054_571_817e-34;
const AMU: f64 = 1.660_539_066_60e-27;
pub const RB87_MASS: f64 = 86.909_180_527 * AMU;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry<T> {
    /// Beam waist W in metres.
    pub waist: T,
    pub eps_x: T,
    pub eps_y: T,
    /// z0 / z_R
    pub eps_z: T,
    /// Trap frequency in rad/s.
    pub omega_x: T,
    pub mass: T,
    /// ¼ m ωx² W² in joules.
    pub v0: T,
}

impl<T: Real> BeamGeometry<T> {
    pub fn new(waist: T, omega_x: T, mass: T, eps_x: T, eps_y: T, eps_z: T) -> Result<Self> {
        let v0 = lit::<T>(0.25) * mass * omega_x * omega_x * waist * waist;
        let g = BeamGeometry { waist, eps_x, eps_y, eps_z, omega_x, mass, v0 };
        g.validate()?;
        Ok(g)
    }

    /// 87Rb in a 700 nm waist tweezer at ωx = 2π·140 kHz.
    pub fn rb87_default() -> Self {
        Self::new(
            lit(700e-9),
            lit(2.0 * std::f64::consts::PI * 140e3),
            lit(RB87_MASS),
            lit(0.041),
            lit(0.018),
            lit(0.014),
        )
        .expect("default geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("waist", self.waist),
            ("eps_x", self.eps_x),
            ("eps_y", self.eps_y),
            ("eps_z", self.eps_z),
            ("omega_x", self.omega_x),
            ("mass", self.mass),
            ("v0", self.v0),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("geometry field {name} must be positive")));
            }
        }
        let cap = lit::<T>(0.2);
        if self.eps_x >= cap || self.eps_y >= cap || self.eps_z >= cap {
            return Err(Error::InvalidInput("eps_x, eps_y, eps_z must be < 0.2".into()));
        }
        let expect = lit::<T>(0.25) * self.mass * self.omega_x * self.omega_x * self.waist * self.waist;
        if ((self.v0 - expect) / expect).abs() > lit(1e-12) {
            return Err(Error::InvalidInput("v0 inconsistent with m, omega_x, W".into()));
        }
        Ok(())
    }

    /// ħωx / V0 implied by the physical constants (in SI). Only informative;
    /// the dimensionless model uses ħωx/V0 = 4 εx².
    pub fn hbar_omega_over_v0(&self) -> T {
        lit::<T>(HBAR) * self.omega_x / self.v0
    }

    /// Oscillator length sqrt(ħ/mωx) over W.
    pub fn physical_eps_x(&self) -> T {
        (lit::<T>(HBAR) / (self.mass * self.omega_x)).sqrt() / self.waist
    }

    /// Converts a time in seconds to the dimensionless ωx t.
    pub fn to_phase(&self, seconds: T) -> T {
        seconds * self.omega_x
    }

    pub fn to_seconds(&self, phase: T) -> T {
        phase / self.omega_x
    }
}

/// π^{-1/2} ∫ (1 + a²x²)^{-n} e^{-x²} dx over the real line.
pub fn g_integral<T: Real>(n: usize, a: T) -> T {
    if a == T::zero() {
        return T::one();
    }
    let a2 = a * a;
    let nn = T::usize(n);
    let f = move |x: T| (-(nn * (T::one() + a2 * x * x).ln()) - x * x).exp();
    // integrand is even and below 1e-27 beyond |x| = 8
    let half = integrate(f, T::zero(), lit(8.0), lit(1e-15));
    lit::<T>(2.0) * half / T::pi().sqrt()
}

/// Cached ζ-independent parts of the axial series for one geometry.
#[derive(Debug, Clone)]
pub struct AxialSeries<T> {
    h: Vec<T>,
}

impl<T: Real> AxialSeries<T> {
    pub fn new(geom: &BeamGeometry<T>) -> Self {
        Self::from_eps(geom.eps_y, geom.eps_z)
    }

    pub fn from_eps(eps_y: T, eps_z: T) -> Self {
        let g: Vec<T> = (0..=S_MAX + T_MAX + 1).map(|n| g_integral(n, eps_z)).collect();
        let y = lit::<T>(2.0) * eps_y * eps_y;
        let h = (0..=S_MAX)
            .map(|s| {
                let mut acc = T::zero();
                let mut yt = T::one();
                for t in 0..=T_MAX {
                    acc += yt * binom_minus_half::<T>(t) * g[s + t + 1];
                    yt *= y;
                }
                acc
            })
            .collect();
        AxialSeries { h }
    }

    /// Coefficient c_m(ζ) of x'^m (m = 0 gives the on-axis offset).
    pub fn coefficient(&self, m: usize, zeta: T) -> Result<T> {
        if zeta.abs() > lit(ZETA_LIMIT) {
            return Err(Error::SeriesDivergence { order: m, zeta: zeta.to_f64(), limit: ZETA_LIMIT });
        }
        let mut sum = T::zero();
        let mut biggest = T::zero();
        let mut last = T::zero();
        let two = lit::<T>(2.0);
        for s in m.div_ceil(2)..=S_MAX {
            let mut term = self.h[s] * binomial::<T>(2 * s, m) / factorial::<T>(s);
            term *= (-two).powi(s as i32) * zeta.powi((2 * s - m) as i32);
            sum += term;
            biggest = biggest.max(term.abs());
            last = term;
        }
        if last.abs() > lit::<T>(1e-13) * biggest.max(sum.abs()) {
            return Err(Error::SeriesDivergence { order: m, zeta: zeta.to_f64(), limit: ZETA_LIMIT });
        }
        Ok(if m % 2 == 0 { -sum } else { sum })
    }
}

/// c_m(ζ, εy, εz) for a single evaluation; prefer [`AxialSeries`] in loops.
pub fn axial_coefficient<T: Real>(m: usize, zeta: T, geom: &BeamGeometry<T>) -> Result<T> {
    AxialSeries::new(geom).coefficient(m, zeta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapLayout<T> {
    pub positions: Vec<T>,
    pub base_depths: Vec<T>,
    pub k_max: usize,
    pub symmetric: bool,
}

impl<T: Real> TrapLayout<T> {
    pub fn new(positions: Vec<T>, base_depths: Vec<T>, k_max: usize, symmetric: bool) -> Result<Self> {
        let l = TrapLayout { positions, base_depths, k_max, symmetric };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 || n != self.base_depths.len() {
            return Err(Error::InvalidInput("layout needs one depth per position".into()));
        }
        if self.base_depths.iter().any(|&u| u < T::zero() || !u.is_finite()) {
            return Err(Error::InvalidInput("base depths must be non-negative".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.positions[i] == self.positions[j] {
                    return Err(Error::InvalidInput("layout positions must be distinct".into()));
                }
            }
        }
        if self.symmetric {
            let tol = lit::<T>(1e-12);
            for j in 0..n {
                let k = n - 1 - j;
                if (self.positions[j] + self.positions[k]).abs() > tol
                    || (self.base_depths[j] - self.base_depths[k]).abs() > tol * (T::one() + self.base_depths[j])
                {
                    return Err(Error::InvalidInput("symmetric layout is not mirror symmetric".into()));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        let zs: Vec<String> = self.positions.iter().map(|z| format!("{:.4}", z.to_f64())).collect();
        format!("[{}]", zs.join(", "))
    }

    /// Symmetric three-beam layout (−ζ, 0, ζ) with depths giving a pure
    /// V2 = 2 harmonic potential.
    pub fn three_beam(zeta: T, geom: &BeamGeometry<T>) -> Result<Self> {
        let d = solve_depths_symmetric(lit(2.0), T::zero(), zeta, geom)?;
        TrapLayout::new(vec![-zeta, T::zero(), zeta], d, 4, true)
    }

    /// Five-beam layout with depths solving V = (0, 2, 0, 0, 0).
    pub fn five_beam(positions: [T; 5], geom: &BeamGeometry<T>) -> Result<Self> {
        let proto = TrapLayout { positions: positions.to_vec(), base_depths: vec![T::zero(); 5], k_max: 5, symmetric: false };
        let target = DVector::from_vec(vec![T::zero(), lit(2.0), T::zero(), T::zero(), T::zero()]);
        let u = solve_depths_general(&target, &proto, geom)?;
        TrapLayout::new(positions.to_vec(), u.as_slice().to_vec(), 5, false)
    }

    pub fn to_file(&self) -> LayoutFile {
        LayoutFile {
            positions: self.positions.iter().map(|x| x.to_f64()).collect(),
            base_depths_over_v0: self.base_depths.iter().map(|x| x.to_f64()).collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn from_file(f: &LayoutFile, k_max: usize) -> Result<Self> {
        TrapLayout::new(
            f.positions.iter().map(|&x| lit(x)).collect(),
            f.base_depths_over_v0.iter().map(|&x| lit(x)).collect(),
            k_max,
            f.symmetric,
        )
    }
}

pub const THREE_BEAM_ZETA: f64 = 0.6775;
pub const FIVE_BEAM_POSITIONS: [f64; 5] = [-1.14, -0.56, 0.04, 0.38, 0.90];

/// Serialized layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub positions: Vec<f64>,
    pub base_depths_over_v0: Vec<f64>,
    pub symmetric: bool,
}

#[derive(Debug, Clone)]
pub struct CoefficientMatrix<T> {
    /// Row k−1 holds order k, column j holds beam j.
    pub entries: DMatrix<T>,
    pub cond: T,
    pub layout: String,
}

impl<T: Real> CoefficientMatrix<T> {
    pub fn k_max(&self) -> usize {
        self.entries.nrows()
    }

    /// Fails when the matrix cannot be trusted for a depth solve.
    pub fn require_well_conditioned(&self) -> Result<()> {
        if !(self.cond <= lit(1e8)) {
            return Err(Error::IllConditioned { layout: self.layout.clone(), cond: self.cond.to_f64() });
        }
        Ok(())
    }

    /// Amplitudes V_k = Σ_j c_kj U_j.
    pub fn apply(&self, depths: &[T]) -> DVector<T> {
        &self.entries * DVector::from_column_slice(depths)
    }

    /// CSV with one row per order and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k");
        for j in 0..self.entries.ncols() {
            s.push_str(&format!(",beam{}", j + 1));
        }
        s.push('\n');
        for k in 0..self.entries.nrows() {
            s.push_str(&format!("{}", k + 1));
            for j in 0..self.entries.ncols() {
                s.push_str(&format!(",{:.16e}", self.entries[(k, j)].to_f64()));
            }
            s.push('\n');
        }
        s
    }
}

/// Coefficient matrix for orders 1..=k_max.
pub fn build_coeff_matrix<T: Real>(positions: &[T], k_max: usize, geom: &BeamGeometry<T>) -> Result<CoefficientMatrix<T>> {
    build_with_series(positions, k_max, &AxialSeries::new(geom))
}

pub fn build_with_series<T: Real>(positions: &[T], k_max: usize, series: &AxialSeries<T>) -> Result<CoefficientMatrix<T>> {
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if positions[i] == positions[j] {
                return Err(Error::InvalidInput("layout positions must be distinct".into()));
            }
        }
    }
    let mut entries = DMatrix::zeros(k_max, positions.len());
    for k in 1..=k_max {
        for (j, &z) in positions.iter().enumerate() {
            entries[(k - 1, j)] = series.coefficient(k, z)?;
        }
    }
    let cond = linalg::condition_number(&entries);
    let zs: Vec<String> = positions.iter().map(|z| format!("{:.4}", z.to_f64())).collect();
    Ok(CoefficientMatrix { entries, cond, layout: format!("[{}]", zs.join(", ")) })
}

/// Depths (U1, U2, U1) of the symmetric layout (−ζ, 0, ζ) realizing V2 and V4.
pub fn solve_depths_symmetric<T: Real>(v2: T, v4: T, zeta: T, geom: &BeamGeometry<T>) -> Result<Vec<T>> {
    solve_symmetric_with(v2, v4, zeta, &AxialSeries::new(geom))
}

pub fn solve_symmetric_with<T: Real>(v2: T, v4: T, zeta: T, series: &AxialSeries<T>) -> Result<Vec<T>> {
    if zeta == T::zero() {
        return Err(Error::InvalidInput("symmetric layout needs zeta != 0".into()));
    }
    let c2z = series.coefficient(2, zeta)?;
    let c4z = series.coefficient(4, zeta)?;
    let c20 = series.coefficient(2, T::zero())?;
    let c40 = series.coefficient(4, T::zero())?;
    let den = c4z * c20 - c40 * c2z;
    if den.abs() < lit(1e-14) {
        return Err(Error::IllConditioned { layout: format!("symmetric zeta = {}", zeta), cond: f64::INFINITY });
    }
    let u2 = (c4z * v2 - c2z * v4) / den;
    let u1 = lit::<T>(0.5) * (-c40 * v2 + c20 * v4) / den;
    Ok(vec![u1, u2, u1])
}

/// U = C⁻¹ V for a square layout (orders 1..=j_max).
pub fn solve_depths_general<T: Real>(target: &DVector<T>, layout: &TrapLayout<T>, geom: &BeamGeometry<T>) -> Result<DVector<T>> {
    let c = build_coeff_matrix(&layout.positions, layout.positions.len(), geom)?;
    solve_with_matrix(target, &c)
}

pub fn solve_with_matrix<T: Real>(target: &DVector<T>, c: &CoefficientMatrix<T>) -> Result<DVector<T>> {
    if c.entries.nrows() != c.entries.ncols() || target.len() != c.entries.nrows() {
        return Err(Error::InvalidInput("general solve needs a square system".into()));
    }
    c.require_well_conditioned()?;
    let u = linalg::solve(&c.entries, target)?;
    let resid = (&c.entries * &u - target).amax();
    let scale = T::one().max(target.amax());
    if resid > lit::<T>(1e-10) * scale {
        return Err(Error::IllConditioned { layout: c.layout.clone(), cond: c.cond.to_f64() });
    }
    Ok(u)
}

/// Rejects depth vectors with a negative entry.
pub fn require_nonnegative<T: Real>(u: &[T]) -> Result<()> {
    for (j, &x) in u.iter().enumerate() {
        if x < T::zero() {
            return Err(Error::InfeasibleDepth { beam: j, time: 0.0, value: x.to_f64() });
        }
    }
    Ok(())
}

/// U_j(t) = U0_j + ΔU_j s(t), with ΔU already scaled by λ.
#[derive(Debug, Clone)]
pub struct DepthSchedule<T> {
    pub base: Vec<T>,
    pub modulation: Vec<T>,
    pub signal: Signal<T>,
}

impl<T: Real> DepthSchedule<T> {
    /// Builds the schedule and enforces non-negative depths on [0, duration].
    pub fn new(base: Vec<T>, modulation: Vec<T>, signal: Signal<T>, duration: T) -> Result<Self> {
        if base.len() != modulation.len() {
            return Err(Error::InvalidInput("schedule dimension mismatch".into()));
        }
        let s = DepthSchedule { base, modulation, signal };
        s.check_positive(duration)?;
        Ok(s)
    }

    pub fn depth(&self, j: usize, t: T) -> T {
        self.base[j] + self.modulation[j] * self.signal.value(t)
    }

    pub fn depths(&self, t: T) -> Vec<T> {
        (0..self.base.len()).map(|j| self.depth(j, t)).collect()
    }

    /// Dense scan with at least 64 samples per fastest period.
    pub fn check_positive(&self, duration: T) -> Result<()> {
        if self.modulation.iter().all(|&m| m == T::zero()) {
            return require_nonnegative(&self.base);
        }
        let dt = sample_step(&self.signal, 64);
        let n = (duration / dt).ceil().to_f64().max(1.0) as usize;
        let h = duration / T::usize(n);
        // beams with U0 > |ΔU| · bound can never go negative
        let bound = self.signal.bound();
        let risky: Vec<usize> = (0..self.base.len())
            .filter(|&j| self.base[j] < self.modulation[j].abs() * bound)
            .collect();
        if risky.is_empty() {
            return Ok(());
        }
        for i in 0..=n {
            let t = h * T::usize(i);
            let s = self.signal.value(t);
            for &j in &risky {
                let u = self.base[j] + self.modulation[j] * s;
                if u < T::zero() {
                    return Err(Error::InfeasibleDepth { beam: j, time: t.to_f64(), value: u.to_f64() });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialValue<T> {
    /// In units of V0.
    pub value: T,
    pub tail_estimate: T,
    pub warning: Option<String>,
}

/// Series value Σ_j U_j Σ_{m ≤ K} c_m(ζ_j) x'^m, including the constant.
pub fn effective_potential<T: Real>(
    x: T,
    positions: &[T],
    depths: &[T],
    geom: &BeamGeometry<T>,
    k_sim: usize,
) -> Result<PotentialValue<T>> {
    if x.abs() > lit(1.5) {
        return Err(Error::InvalidInput("|x'| must be <= 1.5".into()));
    }
    let series = AxialSeries::new(geom);
    let mut value = T::zero();
    let mut tail = T::zero();
    for (&z, &u) in positions.iter().zip(depths) {
        for m in 0..=k_sim + 2 {
            let term = u * series.coefficient(m, z)? * x.powi(m as i32);
            if m <= k_sim {
                value += term;
            } else {
                tail += term.abs();
            }
        }
    }
    let warning = (tail > lit(1e-9)).then(|| format!("series tail {:.2e} V0 beyond order {}", tail.to_f64(), k_sim));
    Ok(PotentialValue { value, tail_estimate: tail, warning })
}

/// Direct quadrature of the beam-averaged potential (oracle mode).
///
/// Averages −U/w² · exp(−2(x'−ζ)²/w² − 2εy²q²/w²) over the y and z ground
/// states, w² = 1 + εz²s².
pub fn effective_potential_quadrature<T: Real>(x: T, positions: &[T], depths: &[T], geom: &BeamGeometry<T>) -> T {
    let two = lit::<T>(2.0);
    let (ey, ez) = (geom.eps_y, geom.eps_z);
    let norm = T::pi();
    let mut total = T::zero();
    for (&z, &u) in positions.iter().zip(depths) {
        let d2 = (x - z) * (x - z);
        let outer = |s: T| {
            let w2 = T::one() + ez * ez * s * s;
            let inner = |q: T| (-(two * d2 + two * ey * ey * q * q) / w2 - q * q).exp();
            let iy = two * integrate(inner, T::zero(), lit(8.0), lit(1e-15));
            iy / w2 * (-s * s).exp()
        };
        let v = two * integrate(outer, T::zero(), lit(8.0), lit(1e-14));
        total -= u * v / norm;
    }
    total
}
