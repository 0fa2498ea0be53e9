//! Simulator and gate compiler for a two-atom motional qubit-oscillator in a
//! stroboscopically engineered optical tweezer.
//!
//! Units: energies in ħωx, times in 1/ωx, potential amplitudes in V0 = ¼mωx²W².
//! The numerical core is generic over [`Real`]; the aliases below pin it to `f64`.

pub mod beamforge;
pub mod dynamics;
pub mod error;
pub mod gatecat;
pub mod linalg;
pub mod relmode;
pub mod scalar;
pub mod special;
pub mod tomoscope;
pub mod waveform;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BeamGeometry = beamforge::BeamGeometry<f64>;
pub type TrapLayout = beamforge::TrapLayout<f64>;
pub type CoefficientMatrix = beamforge::CoefficientMatrix<f64>;
pub type DepthSchedule = beamforge::DepthSchedule<f64>;
pub type RelativeSpectrum = relmode::RelativeSpectrum<f64>;
pub type QubitCoefficients = relmode::QubitCoefficients<f64>;
pub type MotionalState = dynamics::MotionalState<f64>;
pub type DriveAssembly = dynamics::DriveAssembly<f64>;
