//! ⁸⁷Rb 5S₁/₂ hyperfine/Zeeman structure in closed form.
//!
//! The clock pair is |0⟩ ≡ |F=1, m_F=−1⟩ and |1⟩ ≡ |F=2, m_F=+1⟩. Both are
//! weak-field trappable and share the same first-order Zeeman shift at the
//! magic field B₀, where the transition frequency ν₁₀(B) has its minimum and
//! only a quadratic residual dependence δν ≈ β (B−B₀)² survives.
//!
//! Energies are returned as E/h in Hz. The closed-form evaluation here is the
//! fast path; `mw_nearfield::eigensystem` holds the independent 8×8 matrix
//! oracle.

use std::sync::OnceLock;

use thiserror::Error;

use crate::constants::PhysicalConstants;

/// Maximum field accepted by the closed-form evaluation (T).
pub const MAX_FIELD_T: f64 = 10.0;

/// One ground-state sublevel (F, m_F) of ⁸⁷Rb 5S₁/₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HyperfineState {
    f: i32,
    mf: i32,
}

#[derive(Debug, Error, PartialEq)]
pub enum HyperfineError {
    #[error("(F={f}, mF={mf}) is not a 87Rb 5S1/2 sublevel")]
    InvalidState { f: i32, mf: i32 },
    #[error("field magnitude {0} T outside [0, 10 T]")]
    FieldOutOfRange(f64),
    #[error("d nu10/dB has no sign change in (0, {bracket_g} G); constants are inconsistent")]
    MagicFieldNotBracketed { bracket_g: f64 },
}

impl HyperfineState {
    pub fn new(f: i32, mf: i32) -> Result<Self, HyperfineError> {
        if (f == 1 || f == 2) && mf.abs() <= f {
            Ok(Self { f, mf })
        } else {
            Err(HyperfineError::InvalidState { f, mf })
        }
    }

    /// Clock state |0⟩ = |F=1, m_F=−1⟩.
    pub fn clock_0() -> Self {
        Self { f: 1, mf: -1 }
    }

    /// Clock state |1⟩ = |F=2, m_F=+1⟩.
    pub fn clock_1() -> Self {
        Self { f: 2, mf: 1 }
    }

    pub fn f_quantum(&self) -> i32 {
        self.f
    }

    pub fn mf_quantum(&self) -> i32 {
        self.mf
    }

    /// m_F·g_F with the convention g_F = +1/2 for F=2 and −1/2 for F=1, fixed
    /// so that |0⟩ and |1⟩ are trapped with identical moments.
    pub fn mf_gf(&self) -> f64 {
        let gf = if self.f == 2 { 0.5 } else { -0.5 };
        gf * self.mf as f64
    }

    /// Weak-field trappable: energy increases with |B|.
    pub fn is_trappable(&self) -> bool {
        self.mf_gf() > 0.0
    }

    /// All eight sublevels, F=1 then F=2, m_F ascending.
    pub fn all() -> Vec<Self> {
        let mut v = Vec::with_capacity(8);
        for f in [1, 2] {
            for mf in -f..=f {
                v.push(Self { f, mf });
            }
        }
        v
    }
}

impl std::fmt::Display for HyperfineState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|F={},mF={:+}>", self.f, self.mf)
    }
}

/// Closed-form ground-state energies versus field for nuclear spin 3/2.
#[derive(Debug, Clone)]
pub struct BreitRabiModel {
    constants: PhysicalConstants,
    magic_field_cache: OnceLock<f64>,
}

impl Default for BreitRabiModel {
    fn default() -> Self {
        Self::new(PhysicalConstants::rb87())
    }
}

impl BreitRabiModel {
    pub fn new(constants: PhysicalConstants) -> Self {
        Self {
            constants,
            magic_field_cache: OnceLock::new(),
        }
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// Dimensionless field parameter x = (g_J − g_I) μ_B B / (h ν_hfs).
    fn x_of(&self, b: f64) -> f64 {
        let c = &self.constants;
        (c.electron_g_factor - c.nuclear_g_factor) * c.bohr_magneton * b
            / (c.planck * c.hyperfine_splitting)
    }

    fn dx_db(&self) -> f64 {
        let c = &self.constants;
        (c.electron_g_factor - c.nuclear_g_factor) * c.bohr_magneton
            / (c.planck * c.hyperfine_splitting)
    }

    /// E/h in Hz for a sublevel at field magnitude `b` (T).
    ///
    /// Zero of energy at the hyperfine center of gravity: E(F=2)/h = +3ν/8,
    /// E(F=1)/h = −5ν/8 at B = 0.
    pub fn state_energy(&self, state: HyperfineState, b: f64) -> Result<f64, HyperfineError> {
        if !(0.0..=MAX_FIELD_T).contains(&b) || !b.is_finite() {
            return Err(HyperfineError::FieldOutOfRange(b));
        }
        let c = &self.constants;
        let nu = c.hyperfine_splitting;
        let x = self.x_of(b);
        let mf = state.mf_quantum() as f64;
        let nuclear = c.nuclear_g_factor * c.bohr_magneton * mf * b / c.planck;
        // I = 3/2, so 4 mF x / (2I+1) = mF x; the stretched F=2, mF=±2 states
        // reduce to the exact (1 ± x) linear branches through the same sqrt.
        let arg = 1.0 + mf * x + x * x;
        let sign = if state.f_quantum() == 2 { 1.0 } else { -1.0 };
        Ok(-nu / 8.0 + nuclear + sign * nu / 2.0 * arg.sqrt())
    }

    /// Analytic dE/dB in Hz/T.
    pub fn state_energy_derivative(
        &self,
        state: HyperfineState,
        b: f64,
    ) -> Result<f64, HyperfineError> {
        if !(0.0..=MAX_FIELD_T).contains(&b) || !b.is_finite() {
            return Err(HyperfineError::FieldOutOfRange(b));
        }
        let c = &self.constants;
        let nu = c.hyperfine_splitting;
        let x = self.x_of(b);
        let dx = self.dx_db();
        let mf = state.mf_quantum() as f64;
        let nuclear = c.nuclear_g_factor * c.bohr_magneton * mf / c.planck;
        let arg = 1.0 + mf * x + x * x;
        let sign = if state.f_quantum() == 2 { 1.0 } else { -1.0 };
        Ok(nuclear + sign * nu / 2.0 * (mf + 2.0 * x) * dx / (2.0 * arg.sqrt()))
    }

    /// Clock transition ν₁₀(B) = E(|1⟩) − E(|0⟩) in Hz.
    pub fn transition_frequency(&self, b: f64) -> Result<f64, HyperfineError> {
        let e1 = self.state_energy(HyperfineState::clock_1(), b)?;
        let e0 = self.state_energy(HyperfineState::clock_0(), b)?;
        Ok(e1 - e0)
    }

    /// Analytic dν₁₀/dB in Hz/T.
    pub fn transition_frequency_derivative(&self, b: f64) -> Result<f64, HyperfineError> {
        let d1 = self.state_energy_derivative(HyperfineState::clock_1(), b)?;
        let d0 = self.state_energy_derivative(HyperfineState::clock_0(), b)?;
        Ok(d1 - d0)
    }

    /// Magic field B₀ (T): the root of dν₁₀/dB in (0, 10 G), found by
    /// bisection on the analytic derivative and cached.
    pub fn magic_field(&self) -> Result<f64, HyperfineError> {
        if let Some(&b0) = self.magic_field_cache.get() {
            return Ok(b0);
        }
        let bracket_g = 10.0;
        let mut lo = 1e-6 * 1e-4; // 1 µG, derivative negative there
        let mut hi = bracket_g * 1e-4;
        let flo = self.transition_frequency_derivative(lo)?;
        let fhi = self.transition_frequency_derivative(hi)?;
        if flo.signum() == fhi.signum() {
            return Err(HyperfineError::MagicFieldNotBracketed { bracket_g });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = self.transition_frequency_derivative(mid)?;
            if fm.signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        let b0 = 0.5 * (lo + hi);
        let _ = self.magic_field_cache.set(b0);
        Ok(b0)
    }

    /// Curvature β = ½ d²ν₁₀/dB² at B₀, in Hz/T² (≈ 431 Hz/G² × 10⁸ G²/T²).
    ///
    /// Second-order central finite difference with a 1 mG step; the residual
    /// shift near the magic field is δν(B) ≈ β (B − B₀)².
    pub fn quadratic_coefficient(&self) -> Result<f64, HyperfineError> {
        let b0 = self.magic_field()?;
        let h = 1e-3 * 1e-4; // 1 mG in T
        let fp = self.transition_frequency(b0 + h)?;
        let f0 = self.transition_frequency(b0)?;
        let fm = self.transition_frequency(b0 - h)?;
        Ok(0.5 * (fp - 2.0 * f0 + fm) / (h * h))
    }

    /// Residual clock shift δν(B) = ν₁₀(B) − ν₁₀(B₀) in Hz.
    pub fn residual_shift(&self, b: f64) -> Result<f64, HyperfineError> {
        Ok(self.transition_frequency(b)? - self.transition_frequency(self.magic_field()?)?)
    }
}
