//! Thermal atom ensembles in the harmonic trap: Boltzmann position sampling,
//! peak density, and per-atom clock-transition shifts (residual quadratic
//! Zeeman plus density-dependent collisional term).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fieldmap::{ChipLayout, FieldError, FieldSource, Vec3};
use crate::hyperfine::BreitRabiModel;
use crate::trapchar::TrapAnalysis;

/// |B_min − B₀| beyond which shift assignment flags the layout as
/// uncalibrated (T); 50 mG.
pub const CALIBRATION_WARNING_THRESHOLD: f64 = 50e-3 * 1e-4;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("atom count must be >= 1, got {0}")]
    BadAtomCount(f64),
    #[error("trap frequency axis {0} is not positive; cannot sample a thermal state")]
    NonPositiveFrequency(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// How per-atom shifts average over the atom's motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AveragingMode {
    /// Atom frozen at its sampled position.
    Frozen,
    /// Harmonic-orbit time averages at the atom's per-axis energies. Default:
    /// at f ≥ 50 Hz an atom completes many oscillations during a 1 s Ramsey
    /// delay.
    #[default]
    TrajectoryAveraged,
}

/// Parameters of the per-atom frequency-shift model.
#[derive(Debug, Clone)]
pub struct ShiftModel {
    /// Collisional shift coefficient in Hz·m³ (shift = k_coll · density).
    ///
    /// Literature-style mean-field default; the reference experiment cites
    /// the effect without quoting the coefficient, so this is a config value,
    /// never asserted as ground truth.
    pub collisional_coefficient: f64,
    pub averaging_mode: AveragingMode,
}

impl Default for ShiftModel {
    fn default() -> Self {
        Self {
            collisional_coefficient: -4e-21,
            averaging_mode: AveragingMode::TrajectoryAveraged,
        }
    }
}

/// One sampled atom. Coordinates and amplitudes are in the trap's
/// principal-axis frame.
#[derive(Debug, Clone)]
pub struct AtomSample {
    /// Lab-frame position (m).
    pub position: Vec3,
    /// Principal-frame displacement from the minimum (m).
    pub coords: [f64; 3],
    /// Harmonic oscillation amplitude per axis (m).
    pub amplitudes: [f64; 3],
    /// Assigned clock-transition shift (Hz); 0 until `assign_shifts`.
    pub local_shift: f64,
}

/// Monte-Carlo sample of a thermal cloud in a given trap.
#[derive(Debug, Clone)]
pub struct ThermalEnsemble {
    pub atom_count: f64,
    /// Temperature (K).
    pub temperature: f64,
    pub trap: TrapAnalysis,
    pub samples: Vec<AtomSample>,
    pub rng_seed: u64,
    /// Set by `assign_shifts` when |B_min − B₀| exceeds 50 mG.
    pub calibration_warning: bool,
}

/// Per-axis thermal position spread σᵢ = √(k_B T / m) / (2π fᵢ) (m).
pub fn thermal_sigmas(trap: &TrapAnalysis, temperature: f64) -> [f64; 3] {
    let c = crate::constants::PhysicalConstants::rb87();
    let v = (c.boltzmann * temperature / c.rb87_mass).sqrt();
    let mut s = [0.0; 3];
    for i in 0..3 {
        s[i] = v / (2.0 * std::f64::consts::PI * trap.frequencies[i]);
    }
    s
}

/// Peak density n₀ = N ∏ᵢ 1/(√(2π) σᵢ) (m⁻³).
pub fn peak_density(
    atom_count: f64,
    temperature: f64,
    trap: &TrapAnalysis,
) -> Result<f64, EnsembleError> {
    if atom_count < 1.0 {
        return Err(EnsembleError::BadAtomCount(atom_count));
    }
    if temperature <= 0.0 {
        return Err(EnsembleError::NonPositiveTemperature(temperature));
    }
    let sig = thermal_sigmas(trap, temperature);
    let mut n = atom_count;
    for (i, s) in sig.iter().enumerate() {
        if !(trap.frequencies[i] > 0.0) {
            return Err(EnsembleError::NonPositiveFrequency(i));
        }
        n /= (2.0 * std::f64::consts::PI).sqrt() * s;
    }
    Ok(n)
}

/// Sample `n_samples` atoms from the classical Boltzmann distribution in the
/// harmonic trap. Per axis, the energy is exponential with mean k_B T and
/// the phase uniform, which reproduces the Gaussian position marginal and
/// retains the orbit amplitude for trajectory averaging. Deterministic under
/// a fixed seed.
pub fn sample_thermal(
    trap: &TrapAnalysis,
    atom_count: f64,
    temperature: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ThermalEnsemble, EnsembleError> {
    if temperature <= 0.0 {
        return Err(EnsembleError::NonPositiveTemperature(temperature));
    }
    if atom_count < 1.0 {
        return Err(EnsembleError::BadAtomCount(atom_count));
    }
    for i in 0..3 {
        if !(trap.frequencies[i] > 0.0) {
            return Err(EnsembleError::NonPositiveFrequency(i));
        }
    }
    let c = crate::constants::PhysicalConstants::rb87();
    let kt = c.boltzmann * temperature;
    let mut samples = Vec::with_capacity(n_samples);
    for atom_index in 0..n_samples {
        // per-atom stream keyed by index: deterministic under any
        // parallel partitioning of the atom loop
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (atom_index as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut coords = [0.0; 3];
        let mut amplitudes = [0.0; 3];
        let mut position = trap.minimum_position;
        for i in 0..3 {
            let energy: f64 = -kt * (1.0 - rng.random::<f64>()).ln();
            let omega = 2.0 * std::f64::consts::PI * trap.frequencies[i];
            let amplitude = (2.0 * energy / (c.rb87_mass * omega * omega)).sqrt();
            let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let u = amplitude * phase.cos();
            coords[i] = u;
            amplitudes[i] = amplitude;
            position += trap.axes[i] * u;
        }
        samples.push(AtomSample {
            position,
            coords,
            amplitudes,
            local_shift: 0.0,
        });
    }
    Ok(ThermalEnsemble {
        atom_count,
        temperature,
        trap: trap.clone(),
        samples,
        rng_seed: seed,
        calibration_warning: false,
    })
}

/// e⁻ˣ I₀(x) for x ≥ 0 (Abramowitz & Stegun 9.8.1 / 9.8.2).
fn bessel_i0_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 3.75 {
        let t = x / 3.75;
        let t2 = t * t;
        let i0 = 1.0
            + t2 * (3.5156229
                + t2 * (3.0899424
                    + t2 * (1.2067492 + t2 * (0.2659732 + t2 * (0.0360768 + t2 * 0.0045813)))));
        i0 * (-x).exp()
    } else {
        let t = 3.75 / x;
        let p = 0.39894228
            + t * (0.01328592
                + t * (0.00225319
                    + t * (-0.00157565
                        + t * (0.00916281
                            + t * (-0.02057706
                                + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))));
        p / x.sqrt()
    }
}

/// Assign `local_shift` to every atom: residual quadratic Zeeman term plus
/// collisional term, either frozen at the sampled position or averaged over
/// the harmonic orbit.
pub fn assign_shifts(
    mut ensemble: ThermalEnsemble,
    layout: &ChipLayout,
    model: &ShiftModel,
    breit_rabi: &BreitRabiModel,
) -> Result<ThermalEnsemble, EnsembleError> {
    let b0 = breit_rabi
        .magic_field()
        .expect("magic field exists for valid constants");
    let beta = breit_rabi
        .quadratic_coefficient()
        .expect("curvature exists for valid constants");
    ensemble.calibration_warning = (ensemble.trap.b_min - b0).abs() > CALIBRATION_WARNING_THRESHOLD;

    let n0 = peak_density(ensemble.atom_count, ensemble.temperature, &ensemble.trap)?;
    let sig = thermal_sigmas(&ensemble.trap, ensemble.temperature);
    let trap = ensemble.trap.clone();

    for atom in &mut ensemble.samples {
        let (zeeman, collisional) = match model.averaging_mode {
            AveragingMode::Frozen => {
                let b = layout.field(&atom.position)?.norm();
                let mut density = n0;
                for i in 0..3 {
                    density *= (-atom.coords[i] * atom.coords[i] / (2.0 * sig[i] * sig[i])).exp();
                }
                (
                    beta * (b - b0).powi(2),
                    model.collisional_coefficient * density,
                )
            }
            AveragingMode::TrajectoryAveraged => {
                // |B|(t) - B0 = d0 + sum_i q_i cos^2(w_i t + phi_i), with
                // q_i = kappa_i A_i^2 / 2 from the harmonic expansion
                let d0 = trap.b_min - b0;
                let mut q = [0.0; 3];
                for i in 0..3 {
                    q[i] = 0.5 * trap.curvatures[i] * atom.amplitudes[i] * atom.amplitudes[i];
                }
                let qs: f64 = q.iter().sum();
                let q2: f64 = q.iter().map(|v| v * v).sum();
                // <cos^2> = 1/2, <cos^4> = 3/8, <cos^2 cos^2> = 1/4
                let mean_sq = d0 * d0 + d0 * qs + 0.125 * q2 + 0.25 * qs * qs;
                // orbit-averaged Gaussian density:
                // <exp(-A^2 cos^2 / 2 s^2)> = e^(-a/2) I0(a/2), a = A^2/(2 s^2)
                let mut density = n0;
                for i in 0..3 {
                    let a = atom.amplitudes[i] * atom.amplitudes[i] / (2.0 * sig[i] * sig[i]);
                    density *= bessel_i0_scaled(0.5 * a);
                }
                (beta * mean_sq, model.collisional_coefficient * density)
            }
        };
        atom.local_shift = zeeman + collisional;
    }
    Ok(ensemble)
}

impl ThermalEnsemble {
    pub fn shifts(&self) -> Vec<f64> {
        self.samples.iter().map(|a| a.local_shift).collect()
    }

    pub fn shift_mean(&self) -> f64 {
        let s: f64 = self.samples.iter().map(|a| a.local_shift).sum();
        s / self.samples.len() as f64
    }

    pub fn shift_std(&self) -> f64 {
        let m = self.shift_mean();
        let v: f64 = self
            .samples
            .iter()
            .map(|a| (a.local_shift - m).powi(2))
            .sum::<f64>()
            / self.samples.len() as f64;
        v.sqrt()
    }
}
