//! Relative-coordinate Hamiltonian b†b + ½ + √π u′ δ(r) on the even harmonic
//! states |2m⟩, its dressed spectrum and dressed matrix elements of r^q.

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::scalar::{lit, Real};
use crate::special::{brent_root, golden_max, ln_gamma};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_N_REL: usize = 64;
pub const MAX_N_REL: usize = 512;

const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionParams<T> {
    /// u / ħωx
    pub u_prime: T,
}

impl<T: Real> InteractionParams<T> {
    pub fn new(u_prime: T) -> Result<Self> {
        if !(u_prime >= T::zero()) || !u_prime.is_finite() {
            return Err(Error::InvalidInput("u' must be non-negative".into()));
        }
        Ok(InteractionParams { u_prime })
    }

    /// u = a_s sqrt(2ħ m ωx ωy ωz / π), SI inputs.
    pub fn from_scattering_length(a_s: T, mass: T, omega_x: T, omega_y: T, omega_z: T) -> Result<Self> {
        let hbar = lit::<T>(HBAR);
        let u = a_s * (lit::<T>(2.0) * hbar * mass * omega_x * omega_y * omega_z / T::pi()).sqrt();
        Self::new(u / (hbar * omega_x))
    }

    /// Outside the weak-coupling regime the 1D contact model is questionable.
    pub fn beyond_1d_validity(&self) -> bool {
        self.u_prime > T::one()
    }
}

/// χ_m = (−½)^m sqrt(C(2m, m)), the value of the m-th even state at contact up to normalization.
pub fn contact_amplitude<T: Real>(m: usize) -> T {
    let mag = (lit::<T>(0.5) * (ln_gamma(T::usize(2 * m + 1)) - lit::<T>(2.0) * ln_gamma(T::usize(m + 1)))).exp();
    let mag = mag * lit::<T>(0.5).powi(m as i32);
    if m % 2 == 0 {
        mag
    } else {
        -mag
    }
}

/// ⟨2m| √π u δ(r) |2n⟩ = u (−½)^{m+n} sqrt(C(2m,m) C(2n,n)).
pub fn interaction_matrix_element<T: Real>(m: usize, n: usize, u: T) -> T {
    u * contact_amplitude::<T>(m) * contact_amplitude::<T>(n)
}

#[derive(Debug, Clone)]
pub struct RelativeSpectrum<T> {
    pub u_prime: T,
    /// All N_rel dressed energies, ascending.
    pub energies: DVector<T>,
    /// Column i is |2ĩ⟩ expanded over |2m⟩.
    pub vectors: DMatrix<T>,
}

impl<T: Real> RelativeSpectrum<T> {
    pub fn n_rel(&self) -> usize {
        self.energies.len()
    }

    pub fn omega_tilde(&self) -> T {
        self.energies[1] - self.energies[0]
    }

    pub fn omega_tilde_prime(&self) -> T {
        self.energies[2] - self.energies[1]
    }

    pub fn anharmonicity(&self) -> T {
        self.energies[2] - lit::<T>(2.0) * self.energies[1] + self.energies[0]
    }

    /// Dressed matrix of r^q over the lowest `levels` states.
    ///
    /// r = (b + b†)/√2 is built on 2N harmonic levels and powers are taken in
    /// that truncated space, so r^{p+q} = r^p r^q holds exactly on the retained
    /// even block.
    pub fn power_elements(&self, q: usize, levels: usize) -> DMatrix<T> {
        let levels = levels.min(self.n_rel());
        if q % 2 == 1 {
            return DMatrix::zeros(levels, levels);
        }
        let even = even_block_power::<T>(self.n_rel(), q);
        let v = self.vectors.columns(0, levels);
        v.transpose() * even * v
    }

    /// All dressed powers r^0 ..= r^qmax over `levels` states (odd ones zero).
    pub fn power_table(&self, qmax: usize, levels: usize) -> Vec<DMatrix<T>> {
        let levels = levels.min(self.n_rel());
        let n = self.n_rel();
        let r = linalg::quadrature::<T>(2 * n);
        let v = self.vectors.columns(0, levels).into_owned();
        let mut acc = DMatrix::<T>::identity(2 * n, 2 * n);
        let mut out = Vec::with_capacity(qmax + 1);
        for q in 0..=qmax {
            if q % 2 == 1 {
                out.push(DMatrix::zeros(levels, levels));
            } else {
                let e = even_rows_cols(&acc);
                out.push(v.transpose() * e * &v);
            }
            acc = &acc * &r;
        }
        out
    }

    /// Expansion of the lowest `levels` dressed states over harmonic Fock
    /// states |k⟩, k < 2N (odd rows zero).
    pub fn harmonic_embedding(&self, levels: usize) -> DMatrix<T> {
        let n = self.n_rel();
        let levels = levels.min(n);
        let mut out = DMatrix::zeros(2 * n, levels);
        for i in 0..levels {
            for m in 0..n {
                out[(2 * m, i)] = self.vectors[(m, i)];
            }
        }
        out
    }

    /// |Ẽ0(N) − Ẽ0(2N)|, the doubling convergence figure.
    pub fn doubling_delta(&self) -> Result<T> {
        let bigger = diagonalize_relative(self.u_prime, (2 * self.n_rel()).min(MAX_N_REL))?;
        Ok((bigger.energies[0] - self.energies[0]).abs())
    }

    pub fn to_file(&self) -> Result<SpectrumFile> {
        let c = qubit_coefficients(self)?;
        Ok(SpectrumFile {
            u_prime: self.u_prime.to_f64(),
            energies: self.energies.iter().take(8).map(|e| e.to_f64()).collect(),
            anharmonicity: self.anharmonicity().to_f64(),
            omega_tilde_over_omega_x: self.omega_tilde().to_f64(),
            coefficients: CoefficientsFile { c1: c.c1.to_f64(), c2: c.c2.to_f64(), c2p: c.c2p.to_f64(), c3: c.c3.to_f64() },
        })
    }
}

fn even_rows_cols<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| m[(2 * i, 2 * j)])
}

/// Even-even block of r^q computed in a 2N-level truncated Fock space.
pub fn even_block_power<T: Real>(n_rel: usize, q: usize) -> DMatrix<T> {
    let r = linalg::quadrature::<T>(2 * n_rel);
    let mut acc = DMatrix::<T>::identity(2 * n_rel, 2 * n_rel);
    for _ in 0..q {
        acc = &acc * &r;
    }
    even_rows_cols(&acc)
}

/// Diagonalizes (2m + ½)δ_mn + V_mn on `n_rel` even states.
pub fn diagonalize_relative<T: Real>(u_prime: T, n_rel: usize) -> Result<RelativeSpectrum<T>> {
    if n_rel < 8 {
        return Err(Error::InvalidInput("N_rel must be >= 8".into()));
    }
    if n_rel > MAX_N_REL {
        return Err(Error::EigenFailure(format!("N_rel = {n_rel} exceeds the {MAX_N_REL}-level ceiling")));
    }
    InteractionParams::new(u_prime)?;
    let chi: Vec<T> = (0..n_rel).map(contact_amplitude::<T>).collect();
    let h = DMatrix::from_fn(n_rel, n_rel, |m, n| {
        let diag = if m == n { lit::<T>(2.0) * T::usize(m) + lit(0.5) } else { T::zero() };
        diag + u_prime * chi[m] * chi[n]
    });
    let (energies, vectors) = sym_eigen(&h)?;
    for w in energies.as_slice().windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::EigenFailure("dressed energies not strictly increasing".into()));
        }
    }
    Ok(RelativeSpectrum { u_prime, energies, vectors })
}

/// Lowest `count` energies of the untruncated contact problem, from the
/// secular equation cos(πε) Γ(ε+½)/Γ(ε+1) = 2/(√π u′) sin(πε), E = 2ε + ½.
pub fn exact_energies<T: Real>(u_prime: T, count: usize) -> Result<Vec<T>> {
    InteractionParams::new(u_prime)?;
    let half = lit::<T>(0.5);
    if u_prime == T::zero() {
        return Ok((0..count).map(|n| lit::<T>(2.0) * T::usize(n) + half).collect());
    }
    let k = lit::<T>(2.0) / (T::pi().sqrt() * u_prime);
    let f = |e: T| {
        let ratio = (ln_gamma(e + half) - ln_gamma(e + T::one())).exp();
        (T::pi() * e).cos() * ratio - k * (T::pi() * e).sin()
    };
    (0..count)
        .map(|n| {
            let lo = T::usize(n);
            let hi = lo + half;
            brent_root(f, lo, hi, lit(1e-15))
                .map(|e| lit::<T>(2.0) * e + half)
                .ok_or_else(|| Error::EigenFailure(format!("secular root {n} not bracketed")))
        })
        .collect()
}

/// Quadratic-order energies of the three lowest dressed states.
pub fn perturbative_energies<T: Real>(u_prime: T) -> [T; 3] {
    let u = u_prime;
    let u2 = u * u;
    [
        lit::<T>(0.5) + u - lit::<T>(0.69) * u2,
        lit::<T>(2.5) + lit::<T>(0.5) * u - lit::<T>(0.048) * u2,
        lit::<T>(4.5) + lit::<T>(0.375) * u - lit::<T>(0.015_44) * u2,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitCoefficients<T> {
    /// (⟨↑|r²|↑⟩ − ⟨↓|r²|↓⟩)/2
    pub c1: T,
    /// ⟨↑|r²|↓⟩
    pub c2: T,
    /// ⟨2̃|r²|4̃⟩
    pub c2p: T,
    /// ⟨↑|r⁴|↓⟩
    pub c3: T,
}

pub fn qubit_coefficients<T: Real>(spec: &RelativeSpectrum<T>) -> Result<QubitCoefficients<T>> {
    let p2 = spec.power_elements(2, 3);
    let p4 = spec.power_elements(4, 2);
    let c = QubitCoefficients {
        c1: lit::<T>(0.5) * (p2[(0, 0)] - p2[(1, 1)]),
        c2: p2[(0, 1)],
        c2p: p2[(1, 2)],
        c3: p4[(0, 1)],
    };
    if !(c.c2 > T::zero()) {
        return Err(Error::EigenFailure("dressed phase convention gives c2 <= 0".into()));
    }
    Ok(c)
}

/// (u′, A(u′)) on a grid.
pub fn anharmonicity_curve<T: Real>(us: &[T], n_rel: usize) -> Result<Vec<(T, T)>> {
    us.iter()
        .map(|&u| diagonalize_relative(u, n_rel).map(|s| (u, s.anharmonicity())))
        .collect()
}

/// Location and height of the anharmonicity maximum on [lo, hi].
pub fn max_anharmonicity<T: Real>(lo: T, hi: T, n_rel: usize) -> Result<(T, T)> {
    let grid: Vec<T> = (0..=48).map(|i| lo + (hi - lo) * T::usize(i) / T::usize(48)).collect();
    let curve = anharmonicity_curve(&grid, n_rel)?;
    let (ib, _) = curve
        .iter()
        .enumerate()
        .fold((0, -T::max_value().unwrap()), |b, (i, &(_, a))| if a > b.1 { (i, a) } else { b });
    let a = grid[ib.saturating_sub(1)];
    let b = grid[(ib + 1).min(grid.len() - 1)];
    let f = |u: T| diagonalize_relative(u, n_rel).map(|s| s.anharmonicity()).unwrap_or(-T::max_value().unwrap());
    Ok(golden_max(f, a, b, lit(1e-7)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsFile {
    pub c1: f64,
    pub c2: f64,
    pub c2p: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub u_prime: f64,
    pub energies: Vec<f64>,
    pub anharmonicity: f64,
    pub omega_tilde_over_omega_x: f64,
    pub coefficients: CoefficientsFile,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interaction_elements() {
        assert!((interaction_matrix_element(0, 0, 1.0f64) - 1.0).abs() < 1e-15);
        assert!((interaction_matrix_element(1, 1, 1.0f64) - 0.5).abs() < 1e-15);
        assert!((interaction_matrix_element(0, 1, 1.0f64) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        // ψ_{2m}(0)² √π = C(2m,m)/4^m
        assert!((interaction_matrix_element(3, 3, 1.0f64) - 20.0 / 64.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_limit() {
        let s = diagonalize_relative(0.0f64, 16).unwrap();
        for i in 0..16 {
            assert!((s.energies[i] - (2.0 * i as f64 + 0.5)).abs() < 1e-14);
        }
        let c = qubit_coefficients(&s).unwrap();
        let r2 = std::f64::consts::SQRT_2;
        assert!((c.c1 + 1.0).abs() < 1e-13);
        assert!((c.c2 - r2 / 2.0).abs() < 1e-13);
        assert!((c.c2p - 3f64.sqrt()).abs() < 1e-13);
        assert!((c.c3 - 1.5 * r2).abs() < 1e-13);
        assert!((s.power_elements(2, 1)[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exact_energies_frozen() {
        let e = exact_energies(0.2f64, 3).unwrap();
        let frozen = [0.674_66, 2.597_40, 4.574_06];
        for (a, b) in e.iter().zip(frozen) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        let e = exact_energies(0.1f64, 1).unwrap();
        assert!((e[0] - 0.593_37).abs() < 1e-5);
        let e = exact_energies(0.36f64, 3).unwrap();
        assert!((e[1] - e[0] - 1.886_58).abs() < 1e-5);
        assert!((e[2] - e[1] - 1.961_02).abs() < 1e-5);
    }

    #[test]
    fn truncated_close_to_exact() {
        let s = diagonalize_relative(0.2f64, 64).unwrap();
        let e = exact_energies(0.2f64, 3).unwrap();
        // convergence in N is slow (~N^{-1/2}); 64 levels sit within a few 1e-3
        for i in 0..3 {
            assert!((s.energies[i] - e[i]).abs() < 5e-3);
            assert!(s.energies[i] >= e[i]);
        }
    }

    #[test]
    fn perturbative_gap() {
        let p = perturbative_energies(0.36f64);
        assert!((p[1] - p[0] - 1.9032).abs() < 1e-3);
        let p = perturbative_energies(0.1f64);
        assert!((p[0] - 0.5931).abs() < 1e-4);
    }

    #[test]
    fn linear_slopes_of_coefficients() {
        let u = 0.02f64;
        let s = diagonalize_relative(u, 64).unwrap();
        let c = qubit_coefficients(&s).unwrap();
        let r2 = std::f64::consts::SQRT_2;
        // slope checks at small u' against the first-order forms
        assert!(((c.c1 + 1.0) / u - 0.125).abs() < 0.05);
        assert!(((c.c2 - r2 / 2.0) / u - 5.0 * r2 / 16.0).abs() < 0.05);
        assert!(((c.c3 - 1.5 * r2) / u - 23.0 * r2 / 16.0).abs() < 0.1);
        assert!(((c.c2p - 3f64.sqrt()) / u - 5.0 * 3f64.sqrt() / 32.0).abs() < 0.05);
    }

    #[test]
    fn dressed_r2_slope() {
        let u = 0.01f64;
        let s = diagonalize_relative(u, 64).unwrap();
        let v = s.power_elements(2, 2)[(0, 1)];
        let r2 = std::f64::consts::SQRT_2;
        assert!((v - (r2 / 2.0 + 5.0 * r2 / 16.0 * u)).abs() < 5.0 * u * u);
    }

    #[test]
    fn odd_powers_vanish() {
        let s = diagonalize_relative(0.5f64, 32).unwrap();
        assert_eq!(s.power_elements(3, 4).amax(), 0.0);
    }

    #[test]
    fn completeness_exact_in_truncated_space() {
        let s = diagonalize_relative(0.86f64, 64).unwrap();
        let p2 = s.power_elements(2, 64);
        let p4 = s.power_elements(4, 64);
        for i in 0..4 {
            let lhs: f64 = (0..64).map(|j| p2[(i, j)] * p2[(j, i)]).sum();
            assert!((lhs - p4[(i, i)]).abs() < 1e-6);
        }
    }

    #[test]
    fn anharmonicity_peak() {
        let (u, a) = max_anharmonicity(0.0f64, 1.2, 64).unwrap();
        assert!((a - 0.084).abs() < 0.002, "A = {a}");
        assert!((u - 0.61).abs() < 0.02, "u' = {u}");
    }

    #[test]
    fn spectrum_json_fields() {
        let s = diagonalize_relative(0.36f64, 64).unwrap();
        let f = s.to_file().unwrap();
        let j = serde_json::to_value(&f).unwrap();
        assert!(j["coefficients"]["c2p"].is_number());
        assert!((f.omega_tilde_over_omega_x - s.omega_tilde()).abs() < 1e-15);
    }

    #[test]
    fn rejects_oversized_basis() {
        assert!(matches!(diagonalize_relative(0.3f64, 1024), Err(Error::EigenFailure(_))));
        assert!(diagonalize_relative(0.3f64, 4).is_err());
    }
}
