//! Two-atom characteristic-function tomography with a spin-dependent force.
//!
//! The motional state lives on the harmonic COM ⊗ harmonic relative basis
//! (interaction switched off during readout). Internal spins only exist here.
//! Spin index s = 2·s₁ + s₂ with 0 = g, 1 = e.

use crate::dynamics::MotionalState;
use crate::error::{Error, Result};
use crate::relmode::RelativeSpectrum;
use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

type C64 = Complex<f64>;

/// Population allowed to fall off the padded Fock space per displaced branch.
pub const PROTOCOL_CUTOFF: f64 = 1e-8;
/// Edge magnitude of χ_R above which the Wigner transform is flagged as aliased.
pub const ALIAS_LIMIT: f64 = 1e-4;
/// Amplitudes below this are treated as outside the support of a state.
const SUPPORT_EPS: f64 = 1e-16;

/// Motional state on the harmonic (COM, relative) Fock pair; rows COM n, columns relative k.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePair {
    pub amps: DMatrix<C64>,
}

impl ModePair {
    pub fn new(amps: DMatrix<C64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("mode-pair state not normalized (|psi|^2 = {norm:.3e})")));
        }
        Ok(ModePair { amps })
    }

    pub fn vacuum(n_com: usize, n_rel: usize) -> Self {
        let mut amps = DMatrix::zeros(n_com.max(1), n_rel.max(1));
        amps[(0, 0)] = C64::new(1.0, 0.0);
        ModePair { amps }
    }

    /// |α⟩_COM ⊗ |0⟩_rel with the COM cutoff chosen to hold the state to 1e-16.
    pub fn coherent(alpha: C64, n_rel: usize) -> Self {
        let n_com = coherent_cutoff(alpha.norm());
        let com = displacement(alpha, n_com, 1);
        let mut amps = DMatrix::zeros(n_com, n_rel.max(1));
        amps.column_mut(0).copy_from(&com.column(0));
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        ModePair { amps: amps / C64::new(norm, 0.0) }
    }

    /// Re-expands the dressed relative levels of a simulated state on harmonic
    /// Fock states (exact within the spectrum's diagonalization basis).
    pub fn from_motional(state: &MotionalState<f64>, spectrum: &RelativeSpectrum<f64>) -> Result<Self> {
        let b = state.basis;
        if b.n_rel > spectrum.n_rel() {
            return Err(Error::InvalidInput(format!(
                "state uses {} dressed levels but the spectrum only has {}",
                b.n_rel,
                spectrum.n_rel()
            )));
        }
        let embed = spectrum.harmonic_embedding(b.n_rel);
        let mut amps = DMatrix::zeros(b.n_com, embed.nrows());
        for n in 0..b.n_com {
            for i in 0..b.n_rel {
                let a = state.amps[b.index(n, i)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..embed.nrows() {
                    amps[(n, k)] += a * embed[(k, i)];
                }
            }
        }
        let norm = amps.iter().map(|a: &C64| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("empty motional state".into()));
        }
        Ok(ModePair { amps: amps / C64::new(norm, 0.0) })
    }

    pub fn n_com(&self) -> usize {
        self.amps.nrows()
    }

    pub fn n_rel(&self) -> usize {
        self.amps.ncols()
    }

    /// Highest occupied (COM, relative) levels.
    fn support(&self) -> (usize, usize) {
        let mut top = (0, 0);
        for n in 0..self.n_com() {
            for k in 0..self.n_rel() {
                if self.amps[(n, k)].norm() > SUPPORT_EPS {
                    top.0 = top.0.max(n);
                    top.1 = top.1.max(k);
                }
            }
        }
        top
    }

    /// Reduced COM density matrix.
    pub fn com_density(&self) -> DMatrix<C64> {
        &self.amps * self.amps.adjoint()
    }
}

/// Smallest cutoff holding a coherent state of amplitude `r` to 1e-16.
fn coherent_cutoff(r: f64) -> usize {
    let m = r * r;
    (m + 10.0 * (m + 1.0).sqrt() + 20.0).ceil() as usize
}

/// Rows needed so that D(b) applied to states below level `top` loses < 1e-16.
fn displaced_rows(top: usize, b: f64) -> usize {
    let s = (top as f64).sqrt() + b;
    (s * s + 9.0 * s + 16.0).ceil() as usize + top
}

/// ⟨m|D(β)|n⟩ for m < rows, n < cols, exact (not a truncated exponential).
/// Column 0 is the coherent state; later columns use D a† = (a† − β*) D.
pub fn displacement(beta: C64, rows: usize, cols: usize) -> DMatrix<C64> {
    let mut d = DMatrix::zeros(rows, cols);
    if rows == 0 || cols == 0 {
        return d;
    }
    let mut c = C64::new((-beta.norm_sqr() / 2.0).exp(), 0.0);
    for m in 0..rows {
        d[(m, 0)] = c;
        c = c * beta / ((m + 1) as f64).sqrt();
    }
    let bc = beta.conj();
    for n in 1..cols {
        let sn = (n as f64).sqrt();
        for m in 0..rows {
            let up = if m > 0 { d[(m - 1, n - 1)] * (m as f64).sqrt() } else { C64::new(0.0, 0.0) };
            d[(m, n)] = (up - bc * d[(m, n - 1)]) / sn;
        }
    }
    d
}

fn lost(block: &DMatrix<C64>) -> f64 {
    1.0 - block.iter().map(|a| a.norm_sqr()).sum::<f64>()
}

/// D_R(x) ψ on a COM space padded for the displacement.
fn displace_com(psi: &ModePair, top: usize, x: C64) -> Result<DMatrix<C64>> {
    let rows = displaced_rows(top, x.norm());
    let d = displacement(x, rows, top + 1);
    let out = d * psi.amps.rows(0, top + 1);
    check_loss(&out, "COM")?;
    Ok(out)
}

/// D_r(y) ψ on a relative space padded for the displacement.
fn displace_rel(psi: &ModePair, top: usize, y: C64) -> Result<DMatrix<C64>> {
    let cols = displaced_rows(top, y.norm());
    let d = displacement(y, cols, top + 1);
    let out = psi.amps.columns(0, top + 1) * d.transpose();
    check_loss(&out, "relative")?;
    Ok(out)
}

fn check_loss(block: &DMatrix<C64>, mode: &str) -> Result<()> {
    let l = lost(block);
    if l > PROTOCOL_CUTOFF {
        return Err(Error::BasisInadequate(format!(
            "{mode} displacement pushes {l:.3e} of the population past the Fock cutoff"
        )));
    }
    Ok(())
}

/// ⟨a|b⟩ for blocks of different shapes sharing the leading corner.
fn block_dot(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let r = a.nrows().min(b.nrows());
    let c = a.ncols().min(b.ncols());
    let mut s = C64::new(0.0, 0.0);
    for j in 0..c {
        for i in 0..r {
            s += a[(i, j)].conj() * b[(i, j)];
        }
    }
    s
}

fn embed(block: &DMatrix<C64>, rows: usize, cols: usize) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(rows, cols);
    out.view_mut((0, 0), (block.nrows(), block.ncols())).copy_from(block);
    out
}

/// Sx-eigenbasis branch order: ++, +−, −+, −− (index 2·[s₁ = −] + [s₂ = −]).
const BRANCHES: usize = 4;

/// The four displaced motional branches after the spin-dependent force.
struct Branches {
    states: [DMatrix<C64>; BRANCHES],
}

impl Branches {
    fn new(psi: &ModePair, beta: C64) -> Result<Self> {
        let (top_c, top_r) = psi.support();
        let x = beta * SQRT_2;
        Ok(Branches {
            states: [
                displace_com(psi, top_c, x)?,
                displace_rel(psi, top_r, x)?,
                displace_rel(psi, top_r, -x)?,
                displace_com(psi, top_c, -x)?,
            ],
        })
    }

    /// Spin amplitudes in the Sx basis after the θ rotation of |g⟩|g⟩.
    fn weights(theta: f64) -> [C64; BRANCHES] {
        let h = C64::from_polar(FRAC_1_SQRT_2, -theta / 2.0);
        let a = [h, h.conj()];
        [a[0] * a[0], a[0] * a[1], a[1] * a[0], a[1] * a[1]]
    }

    /// 4⟨S_z1 S_z2⟩: S_z maps |±⟩ to ½|∓⟩, so only fully flipped branch pairs contribute.
    fn joint_sz(&self, theta: f64) -> f64 {
        let w = Self::weights(theta);
        let mut s = C64::new(0.0, 0.0);
        for a in 0..BRANCHES {
            let f = BRANCHES - 1 - a;
            s += w[a].conj() * w[f] * block_dot(&self.states[a], &self.states[f]);
        }
        s.re
    }
}

/// Spins ⊗ motion after the protocol; component s over the padded (COM, relative) space.
#[derive(Debug, Clone)]
pub struct SpinMotionalState {
    pub components: [DMatrix<C64>; 4],
}

impl SpinMotionalState {
    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().flat_map(|c| c.iter()).map(|a| a.norm_sqr()).sum()
    }

    /// Population of each spin configuration (gg, ge, eg, ee).
    pub fn spin_populations(&self) -> [f64; 4] {
        let mut p = [0.0; 4];
        for (s, c) in self.components.iter().enumerate() {
            p[s] = c.iter().map(|a| a.norm_sqr()).sum();
        }
        p
    }
}

/// Per-atom rotation e^{−iθS_x} on |g⟩|g⟩, then D_j(2βS_{x,j}) on both atoms.
pub fn apply_protocol(psi: &ModePair, beta: C64, theta: f64) -> Result<SpinMotionalState> {
    let br = Branches::new(psi, beta)?;
    let rows = br.states.iter().map(|s| s.nrows()).max().unwrap_or(0);
    let cols = br.states.iter().map(|s| s.ncols()).max().unwrap_or(0);
    let w = Branches::weights(theta);
    // ⟨g|±⟩ = 1/√2, ⟨e|±⟩ = ±1/√2
    let sign = |spin: usize, minus: usize| if spin == 1 && minus == 1 { -1.0 } else { 1.0 };
    let mut components: [DMatrix<C64>; 4] = std::array::from_fn(|_| DMatrix::zeros(rows, cols));
    for (a, state) in br.states.iter().enumerate() {
        let padded = embed(state, rows, cols) * w[a];
        let (m1, m2) = (a >> 1, a & 1);
        for (s, comp) in components.iter_mut().enumerate() {
            let f = 0.5 * sign(s >> 1, m1) * sign(s & 1, m2);
            *comp += &padded * C64::new(f, 0.0);
        }
    }
    Ok(SpinMotionalState { components })
}

/// 4⟨S_z1 S_z2⟩ with S_z1 S_z2 = diag(¼, −¼, −¼, ¼) over (gg, ge, eg, ee).
pub fn joint_sz(state: &SpinMotionalState) -> f64 {
    let p = state.spin_populations();
    p[0] - p[1] - p[2] + p[3]
}

/// χ(β′) = ⟨ψ|D(β′)|ψ⟩ of one mode, by direct application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Com,
    Rel,
}

pub fn characteristic(psi: &ModePair, beta_p: C64, mode: Mode) -> Result<C64> {
    let (top_c, top_r) = psi.support();
    let moved = match mode {
        Mode::Com => displace_com(psi, top_c, beta_p)?,
        Mode::Rel => displace_rel(psi, top_r, beta_p)?,
    };
    Ok(block_dot(&psi.amps, &moved))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharSample {
    pub beta_re: f64,
    pub beta_im: f64,
    pub theta: f64,
    pub expectation: f64,
}

/// Symmetric square grid: axis values k·spacing for |k| ≤ round(extent/spacing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extent: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn axis(&self) -> Result<Vec<f64>> {
        if !(self.extent > 0.0 && self.spacing > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid extent {} and spacing {} must be positive",
                self.extent, self.spacing
            )));
        }
        let n = (self.extent / self.spacing).round() as i64;
        if n < 1 || n > 2000 {
            return Err(Error::InvalidInput(format!("grid has {} points per half-axis", n)));
        }
        Ok((-n..=n).map(|k| k as f64 * self.spacing).collect())
    }

    /// Extent and spacing suited to a Wigner transform of states up to |α_max|.
    pub fn for_wigner(alpha_max: f64) -> Self {
        GridSpec { extent: 5.0 + 2.0 * alpha_max, spacing: 0.25 }
    }
}

/// χ_R and χ_r on a grid; point (ix, iy) at index iy·n + ix is β′ = axis[ix] + i·axis[iy].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharGrid {
    pub axis: Vec<f64>,
    pub chi_com: Vec<C64>,
    pub chi_rel: Vec<f64>,
    pub samples: Vec<CharSample>,
}

/// Readout angles: θ and θ + π/2 for θ ∈ {0, π/4}.
pub const THETAS: [f64; 4] = [0.0, FRAC_PI_2, FRAC_PI_4, FRAC_PI_4 + FRAC_PI_2];

/// Runs the protocol at every grid point and inverts the joint-spin signals
/// (β′ = 2√2β).
pub fn reconstruct(psi: &ModePair, grid: &GridSpec) -> Result<CharGrid> {
    let axis = grid.axis()?;
    let n = axis.len();
    let points: Vec<(usize, usize)> = (0..n).flat_map(|iy| (0..n).map(move |ix| (ix, iy))).collect();
    let per_point: Vec<[f64; 4]> = points
        .par_iter()
        .map(|&(ix, iy)| {
            let beta = C64::new(axis[ix], axis[iy]) / (2.0 * SQRT_2);
            let br = Branches::new(psi, beta)?;
            Ok(THETAS.map(|t| br.joint_sz(t)))
        })
        .collect::<Result<_>>()?;
    let mut chi_com = Vec::with_capacity(points.len());
    let mut chi_rel = Vec::with_capacity(points.len());
    let mut samples = Vec::with_capacity(4 * points.len());
    for (&(ix, iy), z) in points.iter().zip(&per_point) {
        // θ = 0 gives Re χ_R, θ = π/4 gives Im χ_R; sums give χ_r.
        chi_com.push(C64::new(z[0] - z[1], z[2] - z[3]));
        chi_rel.push(0.5 * ((z[0] + z[1]) + (z[2] + z[3])));
        for (t, e) in THETAS.iter().zip(z) {
            samples.push(CharSample { beta_re: axis[ix], beta_im: axis[iy], theta: *t, expectation: *e });
        }
    }
    Ok(CharGrid { axis, chi_com, chi_rel, samples })
}

impl CharGrid {
    pub fn n(&self) -> usize {
        self.axis.len()
    }

    pub fn spacing(&self) -> f64 {
        self.axis[1] - self.axis[0]
    }

    pub fn beta(&self, idx: usize) -> C64 {
        let n = self.n();
        C64::new(self.axis[idx % n], self.axis[idx / n])
    }

    /// Index of −β′ for the point at `idx`.
    pub fn mirror(&self, idx: usize) -> usize {
        self.chi_com.len() - 1 - idx
    }

    pub fn origin(&self) -> usize {
        self.chi_com.len() / 2
    }

    /// max |χ_R(−β′) − χ_R(β′)*| over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.chi_com.len())
            .map(|i| (self.chi_com[self.mirror(i)] - self.chi_com[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Largest |χ_R| on the outer ring of the grid.
    pub fn edge_magnitude(&self) -> f64 {
        let n = self.n();
        (0..self.chi_com.len())
            .filter(|&i| {
                let (ix, iy) = (i % n, i / n);
                ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1
            })
            .map(|i| self.chi_com[i].norm())
            .fold(0.0, f64::max)
    }

    /// (β′_re, β′_im, χ_R re, χ_R im, χ_r) rows in grid order.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 5]> + '_ {
        (0..self.chi_com.len()).map(move |i| {
            let b = self.beta(i);
            [b.re, b.im, self.chi_com[i].re, self.chi_com[i].im, self.chi_rel[i]]
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerGrid {
    pub axis: Vec<f64>,
    /// W(γ) at index iy·n + ix, γ = axis[ix] + i·axis[iy].
    pub values: Vec<f64>,
    /// Largest imaginary part left by the discrete transform.
    pub max_imag: f64,
    /// Σ W ΔA over the output grid.
    pub integral: f64,
    pub warnings: Vec<String>,
}

impl WignerGrid {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> C64 {
        let n = self.axis.len();
        let (i, _) = self.values.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        C64::new(self.axis[i % n], self.axis[i / n])
    }

    pub fn rows(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        let n = self.axis.len();
        self.values.iter().enumerate().map(move |(i, v)| [self.axis[i % n], self.axis[i / n], *v])
    }
}

/// W(γ) = π⁻² ∫ χ_R(β) e^{γβ* − γ*β} d²β as a direct Riemann sum over the χ grid.
pub fn wigner_from_char(chars: &CharGrid, gamma: &GridSpec) -> Result<WignerGrid> {
    let axis = gamma.axis()?;
    let n = axis.len();
    let h = chars.spacing();
    let weight = h * h / (PI * PI);
    let betas: Vec<C64> = (0..chars.chi_com.len()).map(|i| chars.beta(i)).collect();
    let vals: Vec<C64> = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let g = C64::new(axis[i % n], axis[i / n]);
            let mut s = C64::new(0.0, 0.0);
            for (b, c) in betas.iter().zip(&chars.chi_com) {
                // γβ* − γ*β = 2i Im(γβ*)
                let ph = 2.0 * (g * b.conj()).im;
                s += c * C64::new(ph.cos(), ph.sin());
            }
            s * weight
        })
        .collect();
    let max_imag = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let values: Vec<f64> = vals.iter().map(|v| v.re).collect();
    let dg = gamma.spacing;
    let integral = values.iter().sum::<f64>() * dg * dg;
    let mut warnings = Vec::new();
    let edge = chars.edge_magnitude();
    if edge > ALIAS_LIMIT {
        warnings.push(format!("characteristic function not contained in the grid (edge |chi| = {edge:.2e})"));
    }
    if max_imag > 1e-8 {
        warnings.push(format!("Wigner transform has imaginary residue {max_imag:.2e}"));
    }
    Ok(WignerGrid { axis, values, max_imag, integral, warnings })
}

/// W(γ) of the reduced COM state evaluated from its density matrix (displaced parity).
pub fn wigner_direct(rho: &DMatrix<C64>, gamma: C64) -> f64 {
    let n = rho.nrows();
    let rows = displaced_rows(n, gamma.norm());
    let d = displacement(-gamma, rows, n);
    let moved = &d * rho * d.adjoint();
    let parity: f64 = (0..rows).map(|k| if k % 2 == 0 { moved[(k, k)].re } else { -moved[(k, k)].re }).sum();
    2.0 / PI * parity
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{annihilation, expm, to_complex};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn expm_displacement(beta: C64, n: usize) -> DMatrix<C64> {
        let a = to_complex(&annihilation::<f64>(n));
        expm(&(a.adjoint() * beta - a * beta.conj()))
    }

    fn cat(alpha: f64, n_rel: usize) -> ModePair {
        let n_com = coherent_cutoff(alpha);
        let p = displacement(c(alpha, 0.0), n_com, 1);
        let m = displacement(c(-alpha, 0.0), n_com, 1);
        let mut amps = DMatrix::zeros(n_com, n_rel);
        for k in 0..n_com {
            amps[(k, 0)] = p[(k, 0)] + m[(k, 0)];
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        ModePair::new(amps / c(norm, 0.0)).unwrap()
    }

    #[test]
    fn displacement_matches_exponential() {
        let beta = c(0.7, -1.1);
        let big = expm_displacement(beta, 120);
        let d = displacement(beta, 30, 12);
        for m in 0..30 {
            for n in 0..12 {
                assert!((d[(m, n)] - big[(m, n)]).norm() < 1e-12, "({m},{n})");
            }
        }
    }

    #[test]
    fn zero_beta_leaves_state() {
        let psi = ModePair::coherent(c(0.5, 0.2), 4);
        let s = apply_protocol(&psi, c(0.0, 0.0), 0.0).unwrap();
        assert!((joint_sz(&s) - 1.0).abs() < 1e-12);
        let p = s.spin_populations();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!((s.components[0].view((0, 0), (psi.n_com(), psi.n_rel())) - &psi.amps).norm() < 1e-12);
    }

    #[test]
    fn vacuum_branches_have_equal_weight() {
        let psi = ModePair::vacuum(1, 1);
        let br = Branches::new(&psi, c(0.4, 0.3)).unwrap();
        for s in &br.states {
            assert!((s.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let w = Branches::weights(0.9);
        for x in w {
            assert!((x.norm_sqr() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn vacuum_joint_signal() {
        let psi = ModePair::vacuum(1, 1);
        let beta = c(1.0 / (2.0 * SQRT_2), 0.0);
        let z0 = joint_sz(&apply_protocol(&psi, beta, 0.0).unwrap());
        assert!((z0 - (-0.5f64).exp()).abs() < 1e-12, "{z0}");
        let z4 = joint_sz(&apply_protocol(&psi, beta, FRAC_PI_4).unwrap());
        assert!((z4 - 0.5 * (-0.5f64).exp()).abs() < 1e-12, "{z4}");
    }

    #[test]
    fn literal_state_matches_branch_gram() {
        let psi = cat(1.3, 3);
        let beta = c(0.3, -0.45);
        for t in [0.0, 0.4, 2.0] {
            let lit = joint_sz(&apply_protocol(&psi, beta, t).unwrap());
            let br = Branches::new(&psi, beta).unwrap().joint_sz(t);
            assert!((lit - br).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_is_periodic() {
        let psi = cat(1.0, 2);
        let beta = c(0.2, 0.5);
        let a = joint_sz(&apply_protocol(&psi, beta, 0.3).unwrap());
        let b = joint_sz(&apply_protocol(&psi, beta, 0.3 + 2.0 * PI).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn coherent_characteristic() {
        let alpha = c(0.8, -0.3);
        let psi = ModePair::coherent(alpha, 2);
        let g = reconstruct(&psi, &GridSpec { extent: 2.0, spacing: 0.5 }).unwrap();
        for (i, chi) in g.chi_com.iter().enumerate() {
            let b = g.beta(i);
            let want = (-b.norm_sqr() / 2.0 + b * alpha.conj() - b.conj() * alpha).exp();
            assert!((chi - want).norm() < 1e-10, "{b} {}", (chi - want).norm());
            assert!((g.chi_rel[i] - (-b.norm_sqr() / 2.0).exp()).abs() < 1e-10);
        }
        assert!((g.chi_com[g.origin()] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(g.hermitian_defect() < 1e-10);
    }

    #[test]
    fn cat_reconstruction_matches_direct() {
        let psi = cat(2.0, 1);
        let g = reconstruct(&psi, &GridSpec { extent: 2.0, spacing: 0.25 }).unwrap();
        let big = psi.amps.column(0).into_owned();
        let n = big.len();
        for (i, chi) in g.chi_com.iter().enumerate() {
            let d = expm_displacement(g.beta(i), n + 60);
            let mut v = nalgebra::DVector::zeros(n + 60);
            v.rows_mut(0, n).copy_from(&big);
            let direct = v.dotc(&(d * &v));
            assert!((chi - direct).norm() < 1e-10);
        }
        // fringes along Im β′ at spacing π/|α| for the ±α cat
        let n_ax = g.n();
        let row: Vec<f64> = (0..n_ax).map(|iy| g.chi_com[iy * n_ax + n_ax / 2].re).collect();
        assert!(row.iter().any(|x| *x < -0.1));
    }

    #[test]
    fn vacuum_wigner() {
        let psi = ModePair::vacuum(1, 1);
        let g = reconstruct(&psi, &GridSpec { extent: 6.0, spacing: 0.25 }).unwrap();
        let w = wigner_from_char(&g, &GridSpec { extent: 3.0, spacing: 0.25 }).unwrap();
        let origin = w.values[w.values.len() / 2];
        assert!((origin - 2.0 / PI).abs() < 1e-3, "{origin}");
        assert!((w.integral - 1.0).abs() < 1e-3);
        assert!(w.max_imag < 1e-8);
        assert!(w.warnings.is_empty());
    }

    #[test]
    fn cat_wigner_is_negative() {
        let psi = cat(1.5, 1);
        let spec = GridSpec::for_wigner(1.5);
        let g = reconstruct(&psi, &GridSpec { extent: spec.extent, spacing: 0.5 }).unwrap();
        let w = wigner_from_char(&g, &GridSpec { extent: 3.0, spacing: 0.5 }).unwrap();
        assert!(w.min() < -0.1);
        let rho = psi.com_density();
        for (i, v) in w.values.iter().enumerate() {
            let n = w.axis.len();
            let direct = wigner_direct(&rho, c(w.axis[i % n], w.axis[i / n]));
            assert!((v - direct).abs() < 1e-3);
        }
    }

    #[test]
    fn small_grid_flags_aliasing() {
        let psi = ModePair::coherent(c(2.0, 0.0), 1);
        let g = reconstruct(&psi, &GridSpec { extent: 1.0, spacing: 0.5 }).unwrap();
        let w = wigner_from_char(&g, &GridSpec { extent: 1.0, spacing: 0.5 }).unwrap();
        assert!(!w.warnings.is_empty());
    }
}
