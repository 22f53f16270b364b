//! Two-level coherence: Rabi pulses, Ramsey interferometry over a thermal
//! ensemble, lifetime-limited contrast, and fringe analysis.
//!
//! Frequencies at the API are ordinary frequencies in Hz (Rabi frequency
//! Ω/2π, detunings δ = ν_drive − ν_atom); durations in seconds. States are
//! the clock pair: |0⟩ populated initially, |1⟩ read out at detection.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use crate::fitting::{fit_damped_sine, fit_sine, FitError, FitResult, SineFit};

type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum CoherenceError {
    #[error("state norm {0} differs from 1 beyond tolerance")]
    NotNormalized(f64),
    #[error("rabi frequency must be positive, got {0} Hz")]
    NonPositiveRabi(f64),
    #[error("duration must be nonnegative, got {0} s")]
    NegativeDuration(f64),
    #[error("empty ensemble: no atomic shifts supplied")]
    EmptyEnsemble,
    #[error("scan needs at least 2 points, got {0}")]
    DegenerateScan(usize),
    #[error("hold time would be negative: total time {total} s < sequence time {used} s")]
    TotalTimeTooShort { total: f64, used: f64 },
    #[error("lifetime must be positive, got {0} s")]
    NonPositiveLifetime(f64),
    #[error("lifetime anchors must be sorted in distance and have at least one entry")]
    BadAnchors,
    #[error("contrast scan needs >= {need} points per fringe period, got {got:.1}")]
    UndersampledFringe { need: usize, got: f64 },
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Two-level amplitude pair (c0, c1).
pub type Amplitudes = [C64; 2];

/// Ground state |0⟩ with unit amplitude.
pub fn ground() -> Amplitudes {
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
}

/// Evolve (c0, c1) under resonant-frame Rabi driving for `duration`.
///
/// `rabi_hz` is Ω/2π; `detuning_hz` is δ = ν_drive − ν_atom. Closed-form
/// rotation: axis (Ω, 0, −δ) on the Bloch sphere, angle 2π√(Ω²+δ²)·t.
/// `drive_phase` rotates the drive in the equatorial plane.
pub fn rabi_evolve(
    state: Amplitudes,
    rabi_hz: f64,
    detuning_hz: f64,
    duration: f64,
    drive_phase: f64,
) -> Result<Amplitudes, CoherenceError> {
    let norm = (state[0].norm_sqr() + state[1].norm_sqr()).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(CoherenceError::NotNormalized(norm));
    }
    if rabi_hz <= 0.0 {
        return Err(CoherenceError::NonPositiveRabi(rabi_hz));
    }
    if duration < 0.0 {
        return Err(CoherenceError::NegativeDuration(duration));
    }
    let omega = 2.0 * std::f64::consts::PI * rabi_hz;
    let delta = 2.0 * std::f64::consts::PI * detuning_hz;
    let gen_freq = (omega * omega + delta * delta).sqrt();
    let theta = gen_freq * duration;
    let (s, c) = (0.5 * theta).sin_cos();
    // U = cos(θ/2) I − i sin(θ/2) n·σ with n = (Ω cosφ, Ω sinφ, −δ)/Ω_gen
    // in the (|1⟩, |0⟩) z-basis, so |0⟩ gains energy −δ/2.
    let (nx, ny, nz) = if gen_freq > 0.0 {
        (
            omega * drive_phase.cos() / gen_freq,
            omega * drive_phase.sin() / gen_freq,
            -delta / gen_freq,
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    let i = C64::new(0.0, 1.0);
    // basis order (c1, c0)
    let u11 = C64::new(c, 0.0) - i * s * nz;
    let u10 = -i * s * C64::new(nx, -ny);
    let u01 = -i * s * C64::new(nx, ny);
    let u00 = C64::new(c, 0.0) + i * s * nz;
    let c1 = u11 * state[1] + u10 * state[0];
    let c0 = u01 * state[1] + u00 * state[0];
    Ok([c0, c1])
}

/// How Ramsey pulses are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseModel {
    /// Instantaneous, perfect π/2 rotations; the fringe is ½(1+cos 2πδT_R).
    #[default]
    Ideal,
    /// Finite-duration square pulses at the stated Rabi frequency, so pulse
    /// detuning errors and evolution during the pulses are included.
    Finite,
}

/// A π/2 – T_R – π/2 sequence at one Rabi frequency.
#[derive(Debug, Clone, Copy)]
pub struct PulseSequence {
    /// Ω/2π in Hz.
    pub rabi_hz: f64,
    /// Free-evolution (interrogation) time T_R in s.
    pub ramsey_time: f64,
    /// Drive detuning from the unperturbed clock transition, Hz.
    pub drive_detuning_hz: f64,
    pub model: PulseModel,
}

impl PulseSequence {
    /// Duration of one π/2 pulse, 1/(4Ω).
    pub fn pi_half_duration(&self) -> f64 {
        0.25 / self.rabi_hz
    }

    fn validate(&self) -> Result<(), CoherenceError> {
        if self.rabi_hz <= 0.0 {
            return Err(CoherenceError::NonPositiveRabi(self.rabi_hz));
        }
        if self.ramsey_time < 0.0 {
            return Err(CoherenceError::NegativeDuration(self.ramsey_time));
        }
        Ok(())
    }
}

/// Transfer probability to |1⟩ for a single atom whose transition is shifted
/// by `local_shift_hz` from the unperturbed clock frequency.
pub fn ramsey_single(seq: &PulseSequence, local_shift_hz: f64) -> Result<f64, CoherenceError> {
    seq.validate()?;
    let delta = seq.drive_detuning_hz - local_shift_hz;
    match seq.model {
        PulseModel::Ideal => {
            let phase = 2.0 * std::f64::consts::PI * delta * seq.ramsey_time;
            Ok(0.5 * (1.0 + phase.cos()))
        }
        PulseModel::Finite => {
            let tp = seq.pi_half_duration();
            let mut st = rabi_evolve(ground(), seq.rabi_hz, delta, tp, 0.0)?;
            // free evolution in the drive frame: |0⟩ advances by +πδT, |1⟩ by −πδT
            let half = std::f64::consts::PI * delta * seq.ramsey_time;
            st[0] *= C64::new(0.0, half).exp();
            st[1] *= C64::new(0.0, -half).exp();
            let st = rabi_evolve(st, seq.rabi_hz, delta, tp, 0.0)?;
            Ok(st[1].norm_sqr())
        }
    }
}

/// State-dependent trap lifetimes versus trap–surface distance.
///
/// τ₀(d) interpolates linearly between anchor points and clamps outside
/// them; τ₁ = `state1_factor`·τ₀ with the factor ≤ 1 reflecting the slightly
/// faster loss of the upper clock state.
#[derive(Debug, Clone)]
pub struct DecayModel {
    /// (distance m, lifetime s), sorted by distance.
    pub anchors: Vec<(f64, f64)>,
    /// τ₁/τ₀, in (0, 1].
    pub state1_factor: f64,
}

impl Default for DecayModel {
    fn default() -> Self {
        DecayModel {
            anchors: vec![(5e-6, 1.6), (20e-6, 11.0)],
            state1_factor: 0.8,
        }
    }
}

impl DecayModel {
    fn validate(&self) -> Result<(), CoherenceError> {
        if self.anchors.is_empty()
            || self.anchors.windows(2).any(|w| w[1].0 <= w[0].0)
            || self.anchors.iter().any(|a| a.0 <= 0.0 || a.1 <= 0.0)
        {
            return Err(CoherenceError::BadAnchors);
        }
        if !(self.state1_factor > 0.0 && self.state1_factor <= 1.0) {
            return Err(CoherenceError::NonPositiveLifetime(self.state1_factor));
        }
        Ok(())
    }

    /// Lifetime of |0⟩ at trap–surface distance `d` (m).
    pub fn lifetime0(&self, d: f64) -> Result<f64, CoherenceError> {
        self.validate()?;
        let a = &self.anchors;
        if d <= a[0].0 {
            return Ok(a[0].1);
        }
        if d >= a[a.len() - 1].0 {
            return Ok(a[a.len() - 1].1);
        }
        let w = a.windows(2).find(|w| d <= w[1].0).unwrap();
        let f = (d - w[0].0) / (w[1].0 - w[0].0);
        Ok(w[0].1 + f * (w[1].1 - w[0].1))
    }

    /// Lifetime of |1⟩ at distance `d` (m).
    pub fn lifetime1(&self, d: f64) -> Result<f64, CoherenceError> {
        Ok(self.state1_factor * self.lifetime0(d)?)
    }
}

/// Fringe contrast multiplier 2√(p₀p₁)/(p₀+p₁) after populations have
/// decayed to p_i = e^(−t/τ_i); equals 1 for equal lifetimes.
pub fn differential_lifetime_contrast(tau0: f64, tau1: f64, t: f64) -> Result<f64, CoherenceError> {
    if tau0 <= 0.0 {
        return Err(CoherenceError::NonPositiveLifetime(tau0));
    }
    if tau1 <= 0.0 {
        return Err(CoherenceError::NonPositiveLifetime(tau1));
    }
    if t < 0.0 {
        return Err(CoherenceError::NegativeDuration(t));
    }
    let p0 = (-t / tau0).exp();
    let p1 = (-t / tau1).exp();
    Ok(2.0 * (p0 * p1).sqrt() / (p0 + p1))
}

/// The scanned variable in a Ramsey run.
#[derive(Debug, Clone)]
pub enum Scan {
    /// Vary T_R at fixed drive detuning.
    Time {
        ramsey_times: Vec<f64>,
        drive_detuning_hz: f64,
    },
    /// Vary drive detuning at fixed T_R.
    Frequency {
        detunings_hz: Vec<f64>,
        ramsey_time: f64,
    },
}

impl Scan {
    fn len(&self) -> usize {
        match self {
            Scan::Time { ramsey_times, .. } => ramsey_times.len(),
            Scan::Frequency { detunings_hz, .. } => detunings_hz.len(),
        }
    }

    /// Scan coordinate values (seconds or Hz).
    pub fn values(&self) -> &[f64] {
        match self {
            Scan::Time { ramsey_times, .. } => ramsey_times,
            Scan::Frequency { detunings_hz, .. } => detunings_hz,
        }
    }
}

/// Per-shot technical noise injected into a Ramsey run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunNoise {
    /// rms detected-atom-number noise, added independently to N₀ and N₁.
    pub detection_atoms_rms: f64,
    /// rms common-mode shift of the whole ensemble's transition, Hz
    /// (e.g. from shot-to-shot field fluctuations).
    pub common_frequency_rms_hz: f64,
}

/// Trap-loss configuration for a Ramsey run.
#[derive(Debug, Clone)]
pub struct LossModel {
    pub decay: DecayModel,
    /// Trap–surface distance (m) at which the lifetimes are evaluated.
    pub distance: f64,
    /// With `Some(T)`, a variable hold in |0⟩ pads every shot to total time
    /// T, so the detected total N₀+N₁ is the same at every scan point.
    pub constant_total_time: Option<f64>,
}

/// Outcome of a Ramsey scan over an ensemble.
#[derive(Debug, Clone)]
pub struct RamseyRun {
    pub scan: Scan,
    /// Detected |1⟩ atoms, with noise if requested.
    pub n1: Vec<f64>,
    /// Detected |0⟩ atoms, with noise if requested.
    pub n0: Vec<f64>,
    /// Noiseless ensemble averages, kept alongside the noisy record.
    pub n1_ideal: Vec<f64>,
    pub n0_ideal: Vec<f64>,
    pub atom_number: f64,
}

/// Simulate a Ramsey scan: average the single-atom fringe over the supplied
/// per-atom shifts, weight by trap-loss survival, optionally add per-shot
/// noise.
pub fn ramsey_ensemble(
    shifts_hz: &[f64],
    rabi_hz: f64,
    model: PulseModel,
    scan: &Scan,
    atom_number: f64,
    loss: Option<&LossModel>,
    noise: Option<&RunNoise>,
    seed: u64,
) -> Result<RamseyRun, CoherenceError> {
    if shifts_hz.is_empty() {
        return Err(CoherenceError::EmptyEnsemble);
    }
    if scan.len() < 2 {
        return Err(CoherenceError::DegenerateScan(scan.len()));
    }
    if let Some(l) = loss {
        l.decay.validate()?;
        if let Some(total) = l.constant_total_time {
            let max_tr = match scan {
                Scan::Time { ramsey_times, .. } => ramsey_times.iter().cloned().fold(0.0, f64::max),
                Scan::Frequency { ramsey_time, .. } => *ramsey_time,
            };
            if total < max_tr {
                return Err(CoherenceError::TotalTimeTooShort {
                    total,
                    used: max_tr,
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pts = scan.len();
    let mut run = RamseyRun {
        scan: scan.clone(),
        n1: Vec::with_capacity(n_pts),
        n0: Vec::with_capacity(n_pts),
        n1_ideal: Vec::with_capacity(n_pts),
        n0_ideal: Vec::with_capacity(n_pts),
        atom_number,
    };
    for k in 0..n_pts {
        let (t_r, delta_r) = match scan {
            Scan::Time {
                ramsey_times,
                drive_detuning_hz,
            } => (ramsey_times[k], *drive_detuning_hz),
            Scan::Frequency {
                detunings_hz,
                ramsey_time,
            } => (*ramsey_time, detunings_hz[k]),
        };
        let common = noise
            .map(|n| n.common_frequency_rms_hz * gauss(&mut rng))
            .unwrap_or(0.0);
        let mean_p1 = |detuning: f64| -> Result<f64, CoherenceError> {
            let seq = PulseSequence {
                rabi_hz,
                ramsey_time: t_r,
                drive_detuning_hz: detuning,
                model,
            };
            let mut acc = 0.0;
            for s in shifts_hz {
                acc += ramsey_single(&seq, *s)?;
            }
            Ok(acc / shifts_hz.len() as f64)
        };
        // ideal record: no per-shot noise of any kind
        let p1_ideal = mean_p1(delta_r)?;
        let p1 = if common != 0.0 {
            mean_p1(delta_r - common)?
        } else {
            p1_ideal
        };
        let detected = |p1: f64| -> Result<(f64, f64), CoherenceError> {
            match loss {
                None => Ok((atom_number * p1, atom_number * (1.0 - p1))),
                Some(l) => {
                    let tau0 = l.decay.lifetime0(l.distance)?;
                    let tau1 = l.decay.lifetime1(l.distance)?;
                    let hold = match l.constant_total_time {
                        Some(total) => total - t_r,
                        None => 0.0,
                    };
                    let s_hold = (-hold / tau0).exp();
                    let s0 = (-t_r / tau0).exp();
                    let s1 = (-t_r / tau1).exp();
                    // each state holds half the atoms during T_R; the
                    // coherent fringe part (p1 - 1/2) carries the amplitude
                    // factor √(s0·s1)
                    let coh = (s0 * s1).sqrt();
                    let fringe = p1 - 0.5;
                    let n1 = atom_number * s_hold * (0.25 * (s0 + s1) + coh * fringe);
                    let n0 = atom_number * s_hold * (0.25 * (s0 + s1) - coh * fringe);
                    Ok((n1, n0))
                }
            }
        };
        let (n1_id, n0_id) = detected(p1_ideal)?;
        let (n1_shot, n0_shot) = if common != 0.0 {
            detected(p1)?
        } else {
            (n1_id, n0_id)
        };
        run.n1_ideal.push(n1_id);
        run.n0_ideal.push(n0_id);
        let det = noise.map(|n| n.detection_atoms_rms).unwrap_or(0.0);
        run.n1.push(n1_shot + det * gauss(&mut rng));
        run.n0.push(n0_shot + det * gauss(&mut rng));
    }
    Ok(run)
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    use rand_distr::StandardNormal;
    rng.sample(StandardNormal)
}

/// Contrast and signal-to-noise extracted from a frequency-domain Ramsey scan.
#[derive(Debug, Clone)]
pub struct ContrastResult {
    /// C = (N_max − N_min)/(N_max + N_min) of the fitted fringe.
    pub contrast: f64,
    /// Peak-to-peak fringe amplitude over residual rms.
    pub signal_to_noise: f64,
    pub fit: SineFit,
}

/// Fit the N₁ fringe of a frequency-domain scan and report contrast.
///
/// Requires a `Scan::Frequency` run sampled with at least 8 points per
/// fringe period 1/T_R.
pub fn contrast(run: &RamseyRun) -> Result<ContrastResult, CoherenceError> {
    let Scan::Frequency {
        detunings_hz,
        ramsey_time,
    } = &run.scan
    else {
        return Err(CoherenceError::DegenerateScan(0));
    };
    let n = detunings_hz.len();
    if n < 8 {
        return Err(CoherenceError::DegenerateScan(n));
    }
    let span = detunings_hz[n - 1] - detunings_hz[0];
    let points_per_period = n as f64 / (span * ramsey_time).abs().max(1e-300);
    if points_per_period < 8.0 {
        return Err(CoherenceError::UndersampledFringe {
            need: 8,
            got: points_per_period,
        });
    }
    let fit = fit_sine(detunings_hz, &run.n1, *ramsey_time)?;
    let n_max = fit.offset + fit.amplitude;
    let n_min = fit.offset - fit.amplitude;
    let contrast = if n_max + n_min > 0.0 {
        (n_max - n_min) / (n_max + n_min)
    } else {
        0.0
    };
    let signal_to_noise = if fit.residual_std > 0.0 {
        2.0 * fit.amplitude / fit.residual_std
    } else {
        f64::INFINITY
    };
    Ok(ContrastResult {
        contrast,
        signal_to_noise,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn resonant_pi_pulse_inverts() {
        // Ω/2π = 500 Hz -> π pulse lasts 1 ms
        let st = rabi_evolve(ground(), 500.0, 0.0, 1e-3, 0.0).unwrap();
        assert_abs_diff_eq!(st[1].norm_sqr(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(st[0].norm_sqr(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_pi_pulse_returns_population() {
        let st = rabi_evolve(ground(), 500.0, 0.0, 2e-3, 0.0).unwrap();
        assert_abs_diff_eq!(st[0].norm_sqr(), 1.0, epsilon = 1e-12);
        // global phase flips sign after 2π
        assert_abs_diff_eq!(st[0].re, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn detuned_rabi_max_transfer() {
        let (omega, delta) = (500.0_f64, 300.0_f64);
        let gen = (omega * omega + delta * delta).sqrt();
        let t = 0.5 / gen; // generalized π time
        let st = rabi_evolve(ground(), omega, delta, t, 0.0).unwrap();
        let expect = omega * omega / (gen * gen);
        assert_relative_eq!(st[1].norm_sqr(), expect, max_relative = 1e-10);
    }

    #[test]
    fn norm_preserved_generic() {
        let mut st = ground();
        for k in 0..7 {
            st = rabi_evolve(st, 432.0, -120.0 + 40.0 * k as f64, 3.3e-4, 0.4 * k as f64).unwrap();
            let n = st[0].norm_sqr() + st[1].norm_sqr();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unnormalized_input_rejected() {
        let st = [C64::new(0.7, 0.0), C64::new(0.0, 0.0)];
        assert!(matches!(
            rabi_evolve(st, 500.0, 0.0, 1e-3, 0.0),
            Err(CoherenceError::NotNormalized(_))
        ));
    }

    #[test]
    fn ideal_ramsey_fringe_formula() {
        let seq = PulseSequence {
            rabi_hz: 500.0,
            ramsey_time: 0.1,
            drive_detuning_hz: 7.0,
            model: PulseModel::Ideal,
        };
        let p = ramsey_single(&seq, 2.0).unwrap();
        let expect = 0.5 * (1.0 + (2.0 * PI * 5.0 * 0.1).cos());
        assert_relative_eq!(p, expect, max_relative = 1e-12);
    }

    #[test]
    fn finite_pulses_approach_ideal_fringe() {
        // long T_R relative to the 0.5 ms pulses
        for delta in [0.5_f64, 2.0, 5.0] {
            let mk = |model| PulseSequence {
                rabi_hz: 500.0,
                ramsey_time: 0.5,
                drive_detuning_hz: delta,
                model,
            };
            let ideal = ramsey_single(&mk(PulseModel::Ideal), 0.0).unwrap();
            let finite = ramsey_single(&mk(PulseModel::Finite), 0.0).unwrap();
            assert_abs_diff_eq!(finite, ideal, epsilon = 0.02);
        }
    }

    #[test]
    fn finite_resonant_ramsey_is_full_transfer() {
        let seq = PulseSequence {
            rabi_hz: 500.0,
            ramsey_time: 0.3,
            drive_detuning_hz: 0.0,
            model: PulseModel::Finite,
        };
        let p = ramsey_single(&seq, 0.0).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn gaussian_dephasing_envelope() {
        // deterministic Gaussian quadrature via inverse-CDF-free trick:
        // symmetric 12-point Gauss-Hermite-like sums are overkill; use a
        // large antithetic normal sample instead.
        use rand_distr::{Distribution, Normal};
        let sigma = 0.15; // Hz
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut shifts = Vec::with_capacity(100_000);
        for _ in 0..50_000 {
            let v: f64 = normal.sample(&mut rng);
            shifts.push(v);
            shifts.push(-v);
        }
        for t_r in [0.5_f64, 1.0, 1.5] {
            let mean_cos: f64 = shifts
                .iter()
                .map(|s| (2.0 * PI * s * t_r).cos())
                .sum::<f64>()
                / shifts.len() as f64;
            let envelope = (-2.0 * PI * PI * sigma * sigma * t_r * t_r).exp();
            assert_abs_diff_eq!(mean_cos, envelope, epsilon = 0.01);
        }
    }

    #[test]
    fn lifetime_interpolation_monotone() {
        let d = DecayModel::default();
        assert_relative_eq!(d.lifetime0(5e-6).unwrap(), 1.6);
        assert_relative_eq!(d.lifetime0(20e-6).unwrap(), 11.0);
        assert_relative_eq!(d.lifetime0(100e-6).unwrap(), 11.0);
        assert_relative_eq!(d.lifetime0(2e-6).unwrap(), 1.6);
        let mut last = 0.0;
        for k in 0..40 {
            let dist = 4e-6 + k as f64 * 0.5e-6;
            let tau = d.lifetime0(dist).unwrap();
            assert!(tau >= last);
            last = tau;
        }
        assert!(d.lifetime1(9e-6).unwrap() < d.lifetime0(9e-6).unwrap());
    }

    #[test]
    fn differential_contrast_bounds() {
        assert_relative_eq!(differential_lifetime_contrast(5.0, 5.0, 3.0).unwrap(), 1.0);
        let c = differential_lifetime_contrast(11.0, 0.8 * 11.0, 5.0).unwrap();
        assert!(c < 1.0 && c > 0.9);
        assert_relative_eq!(differential_lifetime_contrast(3.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn constant_total_time_keeps_total_number_flat() {
        // equal lifetimes: detected N0+N1 must be identical at every T_R
        let shifts = vec![0.0, 0.05, -0.05];
        let scan = Scan::Time {
            ramsey_times: (1..=10).map(|k| 0.1 * k as f64).collect(),
            drive_detuning_hz: 3.0,
        };
        let loss = LossModel {
            decay: DecayModel {
                anchors: vec![(5e-6, 1.6), (20e-6, 11.0)],
                state1_factor: 1.0,
            },
            distance: 9e-6,
            constant_total_time: Some(1.2),
        };
        let run = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1.5e4,
            Some(&loss),
            None,
            1,
        )
        .unwrap();
        let totals: Vec<f64> = run
            .n1_ideal
            .iter()
            .zip(&run.n0_ideal)
            .map(|(a, b)| a + b)
            .collect();
        for t in &totals {
            assert_abs_diff_eq!(*t, totals[0], epsilon = 1e-6 * totals[0]);
        }
    }

    #[test]
    fn variable_total_time_total_number_decays() {
        let shifts = vec![0.0];
        let scan = Scan::Time {
            ramsey_times: vec![0.1, 0.5, 1.0],
            drive_detuning_hz: 3.0,
        };
        let loss = LossModel {
            decay: DecayModel::default(),
            distance: 9e-6,
            constant_total_time: None,
        };
        let run = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1.0e4,
            Some(&loss),
            None,
            1,
        )
        .unwrap();
        let totals: Vec<f64> = run
            .n1_ideal
            .iter()
            .zip(&run.n0_ideal)
            .map(|(a, b)| a + b)
            .collect();
        assert!(totals[0] > totals[1] && totals[1] > totals[2]);
    }

    #[test]
    fn noiseless_record_separable_from_noise() {
        let shifts = vec![0.0, 0.1];
        let scan = Scan::Frequency {
            detunings_hz: (0..64).map(|k| -8.0 + 0.25 * k as f64).collect(),
            ramsey_time: 0.25,
        };
        let noise = RunNoise {
            detection_atoms_rms: 200.0,
            common_frequency_rms_hz: 0.02,
        };
        let run = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1.5e4,
            None,
            Some(&noise),
            7,
        )
        .unwrap();
        // ideal record is smooth / noise-free
        let run2 = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1.5e4,
            None,
            None,
            99,
        )
        .unwrap();
        for (a, b) in run.n1_ideal.iter().zip(&run2.n1_ideal) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let devsq: f64 = run
            .n1
            .iter()
            .zip(&run.n1_ideal)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / run.n1.len() as f64;
        assert!(devsq.sqrt() > 50.0, "noise should perturb the record");
    }

    #[test]
    fn determinism_same_seed() {
        let shifts = vec![0.0, 0.1, 0.2];
        let scan = Scan::Frequency {
            detunings_hz: (0..32).map(|k| k as f64 * 0.2).collect(),
            ramsey_time: 0.3,
        };
        let noise = RunNoise {
            detection_atoms_rms: 100.0,
            common_frequency_rms_hz: 0.01,
        };
        let a = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1e4,
            None,
            Some(&noise),
            42,
        )
        .unwrap();
        let b = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1e4,
            None,
            Some(&noise),
            42,
        )
        .unwrap();
        assert_eq!(a.n1, b.n1);
        assert_eq!(a.n0, b.n0);
    }

    #[test]
    fn contrast_of_clean_fringe_is_unity() {
        let shifts = vec![0.0];
        let scan = Scan::Frequency {
            detunings_hz: (0..96).map(|k| -6.0 + 0.125 * k as f64).collect(),
            ramsey_time: 0.25,
        };
        let run = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1.5e4,
            None,
            None,
            1,
        )
        .unwrap();
        let c = contrast(&run).unwrap();
        assert_relative_eq!(c.contrast, 1.0, max_relative = 1e-3);
    }

    #[test]
    fn dephasing_lowers_fitted_contrast() {
        use rand_distr::{Distribution, Normal};
        let sigma = 0.35;
        let t_r = 1.0;
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut shifts = Vec::new();
        for _ in 0..4000 {
            let v: f64 = normal.sample(&mut rng);
            shifts.push(v);
            shifts.push(-v);
        }
        let scan = Scan::Frequency {
            detunings_hz: (0..64).map(|k| -2.0 + 0.0625 * k as f64).collect(),
            ramsey_time: t_r,
        };
        let run = ramsey_ensemble(
            &shifts,
            500.0,
            PulseModel::Ideal,
            &scan,
            1.5e4,
            None,
            None,
            1,
        )
        .unwrap();
        let c = contrast(&run).unwrap();
        let envelope = (-2.0 * PI * PI * sigma * sigma * t_r * t_r).exp();
        assert_abs_diff_eq!(c.contrast, envelope, epsilon = 0.03);
    }

    #[test]
    fn undersampled_contrast_scan_rejected() {
        let shifts = vec![0.0];
        // 1/T_R = 2 Hz period, 1 Hz steps: only 2 points per period
        let scan = Scan::Frequency {
            detunings_hz: (0..16).map(|k| k as f64).collect(),
            ramsey_time: 0.5,
        };
        let run =
            ramsey_ensemble(&shifts, 500.0, PulseModel::Ideal, &scan, 1e4, None, None, 1).unwrap();
        assert!(matches!(
            contrast(&run),
            Err(CoherenceError::UndersampledFringe { .. })
        ));
    }

    #[test]
    fn total_time_shorter_than_scan_rejected() {
        let shifts = vec![0.0];
        let scan = Scan::Time {
            ramsey_times: vec![0.5, 2.0],
            drive_detuning_hz: 1.0,
        };
        let loss = LossModel {
            decay: DecayModel::default(),
            distance: 9e-6,
            constant_total_time: Some(1.0),
        };
        assert!(matches!(
            ramsey_ensemble(
                &shifts,
                500.0,
                PulseModel::Ideal,
                &scan,
                1e4,
                Some(&loss),
                None,
                1
            ),
            Err(CoherenceError::TotalTimeTooShort { .. })
        ));
    }
}
