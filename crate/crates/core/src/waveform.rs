//! Time-dependent drive signals shared by the beam and gate layers.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sin,
    Cos,
}

/// One tone `sign · shape(omega t − phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone<T> {
    pub omega: T,
    pub phase: T,
    pub sign: T,
    pub shape: Shape,
}

impl<T: Real> Tone<T> {
    pub fn sin(omega: T, phase: T, sign: T) -> Self {
        Tone { omega, phase, sign, shape: Shape::Sin }
    }

    pub fn cos(omega: T, phase: T, sign: T) -> Self {
        Tone { omega, phase, sign, shape: Shape::Cos }
    }

    #[inline]
    pub fn value(&self, t: T) -> T {
        let arg = self.omega * t - self.phase;
        self.sign
            * match self.shape {
                Shape::Sin => arg.sin(),
                Shape::Cos => arg.cos(),
            }
    }
}

/// Sum of tones; no tones means a constant 1 (DC).
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub tones: Vec<Tone<T>>,
}

impl<T: Real> Signal<T> {
    pub fn dc() -> Self {
        Signal { tones: Vec::new() }
    }

    pub fn new(tones: Vec<Tone<T>>) -> Self {
        Signal { tones }
    }

    pub fn is_dc(&self) -> bool {
        self.tones.is_empty()
    }

    #[inline]
    pub fn value(&self, t: T) -> T {
        if self.tones.is_empty() {
            return T::one();
        }
        self.tones.iter().fold(T::zero(), |a, tone| a + tone.value(t))
    }

    /// Upper bound on |value|.
    pub fn bound(&self) -> T {
        if self.tones.is_empty() {
            return T::one();
        }
        self.tones.iter().fold(T::zero(), |a, t| a + t.sign.abs())
    }

    pub fn fastest_omega(&self) -> T {
        self.tones.iter().fold(T::zero(), |a, t| a.max(t.omega.abs()))
    }
}

/// Controlled amplitude of one polynomial order, in units of λV0.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub order: usize,
    pub amplitude: T,
    pub signal: Signal<T>,
}

impl<T: Real> Waveform<T> {
    pub fn value(&self, t: T) -> T {
        self.amplitude * self.signal.value(t)
    }

    pub fn tone_count(&self) -> usize {
        self.signal.tones.len()
    }
}

/// Sampling step that resolves the fastest tone with `per_period` points.
pub fn sample_step<T: Real>(signal: &Signal<T>, per_period: usize) -> T {
    let w = signal.fastest_omega().max(T::one());
    T::two_pi() / w / T::usize(per_period.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_and_tones() {
        let s = Signal::<f64>::dc();
        assert_eq!(s.value(3.0), 1.0);
        let s = Signal::new(vec![Tone::sin(1.0, 0.0, 1.0), Tone::sin(2.0, 0.5, -1.0)]);
        let t: f64 = 0.7;
        assert!((s.value(t) - (t.sin() - (2.0 * t - 0.5).sin())).abs() < 1e-15);
        assert_eq!(s.bound(), 2.0);
        assert_eq!(s.fastest_omega(), 2.0);
    }
}
