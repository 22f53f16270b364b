//! Physical constants for ⁸⁷Rb ground-state calculations.
//!
//! Values are CODATA 2018 / standard ⁸⁷Rb reference data, pinned here to 12
//! significant digits. They are external inputs to the model; nothing in this
//! crate fits or adjusts them.

use thiserror::Error;

/// Constant table, SI units throughout. Energies elsewhere in the crate are
/// reported as E/h in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    /// Bohr magneton μ_B (J/T).
    pub bohr_magneton: f64,
    /// Planck constant h (J·s).
    pub planck: f64,
    /// Boltzmann constant k_B (J/K).
    pub boltzmann: f64,
    /// ⁸⁷Rb atomic mass (kg).
    pub rb87_mass: f64,
    /// Vacuum permeability μ₀ (T·m/A).
    pub vacuum_permeability: f64,
    /// Ground-state hyperfine splitting ν_hfs (Hz).
    pub hyperfine_splitting: f64,
    /// Electron (fine-structure) g-factor g_J for 5S₁/₂.
    pub electron_g_factor: f64,
    /// Nuclear g-factor g_I in the μ_B convention (negative for ⁸⁷Rb).
    pub nuclear_g_factor: f64,
    /// Standard gravitational acceleration (m/s²).
    pub gravity: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConstantsError {
    #[error("constant {name} = {value} violates positivity")]
    NonPositive { name: &'static str, value: f64 },
    #[error("nuclear g-factor must be negative for 87Rb, got {0}")]
    NuclearSign(f64),
    #[error("hyperfine splitting {0} Hz is more than 1 kHz from 6.834682611 GHz")]
    HyperfineOutOfRange(f64),
}

/// Reference value of ν_hfs used by the construction guard (Hz).
pub const HYPERFINE_REFERENCE_HZ: f64 = 6.834_682_611e9;

impl PhysicalConstants {
    /// Standard table used throughout the crate.
    pub fn rb87() -> Self {
        // Construction cannot fail for the pinned values.
        Self::new(
            9.274_010_078_31e-24, // μ_B, CODATA 2018
            6.626_070_150_00e-34, // h, exact (SI 2019)
            1.380_649_000_00e-23, // k_B, exact (SI 2019)
            1.443_160_648_00e-25, // m(87Rb)
            1.256_637_062_12e-6,  // μ₀, CODATA 2018
            6.834_682_610_90e9,   // ν_hfs
            2.002_331_130_00,     // g_J(5S1/2)
            -9.951_414_000_00e-4, // g_I (μ_B convention)
            9.806_650_000_00,     // g_n, exact by definition
        )
        .expect("pinned constants are valid")
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bohr_magneton: f64,
        planck: f64,
        boltzmann: f64,
        rb87_mass: f64,
        vacuum_permeability: f64,
        hyperfine_splitting: f64,
        electron_g_factor: f64,
        nuclear_g_factor: f64,
        gravity: f64,
    ) -> Result<Self, ConstantsError> {
        let positive = [
            ("bohr_magneton", bohr_magneton),
            ("planck", planck),
            ("boltzmann", boltzmann),
            ("rb87_mass", rb87_mass),
            ("vacuum_permeability", vacuum_permeability),
            ("hyperfine_splitting", hyperfine_splitting),
            ("electron_g_factor", electron_g_factor),
            ("gravity", gravity),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConstantsError::NonPositive { name, value });
            }
        }
        if nuclear_g_factor >= 0.0 || !nuclear_g_factor.is_finite() {
            return Err(ConstantsError::NuclearSign(nuclear_g_factor));
        }
        if (hyperfine_splitting - HYPERFINE_REFERENCE_HZ).abs() > 1e3 {
            return Err(ConstantsError::HyperfineOutOfRange(hyperfine_splitting));
        }
        Ok(Self {
            bohr_magneton,
            planck,
            boltzmann,
            rb87_mass,
            vacuum_permeability,
            hyperfine_splitting,
            electron_g_factor,
            nuclear_g_factor,
            gravity,
        })
    }

    /// μ_B/h in Hz/T (≈ 1.3996 MHz/G × 10⁴ G/T).
    pub fn bohr_magneton_hz_per_tesla(&self) -> f64 {
        self.bohr_magneton / self.planck
    }

    /// Squared ratio of electron and nuclear g-factors, (g_J/g_I)².
    ///
    /// This is the suppression factor for magnetic near-field-noise
    /// decoherence of the clock pair relative to a bare electron moment.
    pub fn moment_suppression_ratio(&self) -> f64 {
        (self.electron_g_factor / self.nuclear_g_factor).powi(2)
    }

    /// Render the table as the documented key/value audit file.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str("# atomchip constant table, version 1\n");
        s.push_str("# SI units. External reference data (CODATA 2018 / standard Rb-87 values),\n");
        s.push_str("# not fitted quantities. Keys are stable; parsers may rely on them.\n");
        s.push_str(&format!(
            "bohr_magneton_j_per_t = {:.11e}\n",
            self.bohr_magneton
        ));
        s.push_str(&format!("planck_j_s = {:.11e}\n", self.planck));
        s.push_str(&format!("boltzmann_j_per_k = {:.11e}\n", self.boltzmann));
        s.push_str(&format!("rb87_mass_kg = {:.11e}\n", self.rb87_mass));
        s.push_str(&format!(
            "vacuum_permeability_t_m_per_a = {:.11e}\n",
            self.vacuum_permeability
        ));
        s.push_str(&format!(
            "hyperfine_splitting_hz = {:.11e}\n",
            self.hyperfine_splitting
        ));
        s.push_str(&format!(
            "electron_g_factor = {:.11e}\n",
            self.electron_g_factor
        ));
        s.push_str(&format!(
            "nuclear_g_factor = {:.11e}\n",
            self.nuclear_g_factor
        ));
        s.push_str(&format!("gravity_m_per_s2 = {:.11e}\n", self.gravity));
        s
    }
}

/// Version tag written into output-file headers alongside the config hash.
pub const CONSTANT_TABLE_VERSION: &str = "1";
