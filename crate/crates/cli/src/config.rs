//! Run configuration: one JSON document, every field defaulted.

use motionq::beamforge::{BeamGeometry, DEFAULT_K_SIM, FIVE_BEAM_POSITIONS, RB87_MASS, THREE_BEAM_ZETA};
use motionq::dynamics::{PropagatorConfig, DEFAULT_N_REL_DYN, DEFAULT_STEPS_PER_PERIOD};
use motionq::gatecat::{GateKind, GateRequest, HamiltonianModel, SimSettings};
use motionq::relmode::DEFAULT_N_REL;
use motionq::tomoscope::GridSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: Physics,
    pub layout: Layout,
    pub numerics: Numerics,
    pub gate: GateRequest,
    pub sweep: Sweep,
    pub spectrum: SpectrumScan,
    pub tomography: Tomography,
    pub reproduce: Reproduce,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            physics: Physics::default(),
            layout: Layout::default(),
            numerics: Numerics::default(),
            gate: GateRequest::new(GateKind::D, 3.0),
            sweep: Sweep::default(),
            spectrum: SpectrumScan::default(),
            tomography: Tomography::default(),
            reproduce: Reproduce::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub omega_x_hz: f64,
    pub waist_m: f64,
    pub mass_kg: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_z: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { omega_x_hz: 140e3, waist_m: 700e-9, mass_kg: RB87_MASS, eps_x: 0.041, eps_y: 0.018, eps_z: 0.014 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub three_beam_zeta: f64,
    pub five_beam_positions: [f64; 5],
}

impl Default for Layout {
    fn default() -> Self {
        Layout { three_beam_zeta: THREE_BEAM_ZETA, five_beam_positions: FIVE_BEAM_POSITIONS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub steps_per_period: usize,
    pub norm_tolerance: f64,
    pub k_sim: usize,
    pub n_rel_spectrum: usize,
    pub n_rel_dyn: usize,
    /// Fixed COM cutoff; chosen per gate when absent.
    pub n_com: Option<usize>,
    pub model: HamiltonianModel,
    pub strict: bool,
    pub dt_check: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            norm_tolerance: 1e-10,
            k_sim: DEFAULT_K_SIM,
            n_rel_spectrum: DEFAULT_N_REL,
            n_rel_dyn: DEFAULT_N_REL_DYN,
            n_com: None,
            model: HamiltonianModel::Full,
            strict: false,
            dt_check: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub kind: GateKind,
    pub magnitudes: Vec<f64>,
    /// Explicit λ grid shared by every magnitude; log-spaced over the feasible range otherwise.
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub points_per_decade: usize,
    pub refine: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            kind: GateKind::D,
            magnitudes: vec![1.0, 2.0, 3.0],
            lambda_grid: None,
            lambda_min: None,
            lambda_max: None,
            points_per_decade: 12,
            refine: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumScan {
    pub u_min: f64,
    pub u_max: f64,
    pub points: usize,
    pub levels: usize,
}

impl Default for SpectrumScan {
    fn default() -> Self {
        SpectrumScan { u_min: 0.0, u_max: 1.2, points: 61, levels: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TomoState {
    Vacuum,
    Coherent,
    /// Final state of the configured gate run.
    PostGate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tomography {
    pub state: TomoState,
    pub alpha: [f64; 2],
    /// χ grid; sized for the Wigner transform when absent.
    pub grid: Option<GridSpec>,
    pub wigner: Option<GridSpec>,
}

impl Default for Tomography {
    fn default() -> Self {
        Tomography { state: TomoState::Vacuum, alpha: [1.0, 0.0], grid: None, wigner: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reproduce {
    /// Gate-time window as a fraction of the reference time.
    pub window: f64,
    /// Restrict to these gates (all four when empty).
    pub gates: Vec<GateKind>,
}

impl Default for Reproduce {
    fn default() -> Self {
        Reproduce { window: motionq::gatecat::TIME_WINDOW, gates: Vec::new() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// SHA-256 over the canonical JSON of the resolved config (first 16 hex digits).
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn geometry(&self) -> Result<BeamGeometry<f64>, motionq::Error> {
        let p = &self.physics;
        BeamGeometry::new(p.waist_m, 2.0 * std::f64::consts::PI * p.omega_x_hz, p.mass_kg, p.eps_x, p.eps_y, p.eps_z)
    }

    pub fn settings(&self) -> Result<SimSettings, motionq::Error> {
        let n = &self.numerics;
        Ok(SimSettings {
            geometry: self.geometry()?,
            three_beam_zeta: self.layout.three_beam_zeta,
            five_beam_positions: self.layout.five_beam_positions,
            k_sim: n.k_sim,
            n_rel_spectrum: n.n_rel_spectrum,
            n_rel_dyn: n.n_rel_dyn,
            n_com: n.n_com,
            propagator: PropagatorConfig {
                steps_per_period: n.steps_per_period,
                norm_tolerance: n.norm_tolerance,
                dt_check: n.dt_check,
                strict: n.strict,
            },
            model: n.model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        let empty: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"physics": {"omega": 1}}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let mut c = RunConfig::default();
        let h = c.hash();
        c.physics.eps_x = 0.04;
        assert_ne!(h, c.hash());
    }
}
