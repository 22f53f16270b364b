//! Clock operation: shot-by-shot interrogation at the fringe side, frequency
//! inference from the atom-number signal, and Allan-deviation analysis.
//!
//! A "shot" is one load–interrogate–detect cycle of period `cycle_period`.
//! The servo model is open-loop: each shot's inferred frequency error is
//! recorded, and stability is evaluated on the resulting time series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Hyperfine clock carrier, Hz (used to form fractional frequency).
pub const CARRIER_HZ: f64 = 6.834_682_610_90e9;

#[derive(Debug, Error, PartialEq)]
pub enum ClockError {
    #[error("fringe slope is zero at the operating point (phase {0} rad)")]
    ZeroSlope(f64),
    #[error("need at least {need} shots, got {got}")]
    TooFewShots { need: usize, got: usize },
    #[error("averaging factor {m} leaves fewer than 2 block averages (n = {n})")]
    TauTooLong { m: usize, n: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("contrast must lie in (0, 1], got {0}")]
    BadContrast(f64),
    #[error("log-log fit needs at least 3 tau points, got {0}")]
    TooFewTaus(usize),
}

/// Technical noise entering one clock shot.
///
/// Defaults follow the reference operating point: a few-mG field offset and
/// jitter around the magic field, percent-level atom-number fluctuations, and
/// detection noise well below the fringe amplitude.
#[derive(Debug, Clone, Copy)]
pub struct NoiseBudget {
    /// Static magnetic-field offset from the magic field, T.
    pub field_offset_t: f64,
    /// rms shot-to-shot field jitter, T.
    pub field_jitter_t: f64,
    /// rms fractional atom-number fluctuation.
    pub atom_number_fraction: f64,
    /// rms detected-atom noise added to N₁, atoms.
    pub detection_atoms_rms: f64,
}

impl Default for NoiseBudget {
    fn default() -> Self {
        NoiseBudget {
            field_offset_t: 5e-7, // 5 mG
            field_jitter_t: 5e-7, // 5 mG rms
            atom_number_fraction: 0.04,
            detection_atoms_rms: 250.0,
        }
    }
}

impl NoiseBudget {
    /// A budget with every term zeroed.
    pub fn quiet() -> Self {
        NoiseBudget {
            field_offset_t: 0.0,
            field_jitter_t: 0.0,
            atom_number_fraction: 0.0,
            detection_atoms_rms: 0.0,
        }
    }
}

/// Operating parameters for a clock run.
#[derive(Debug, Clone, Copy)]
pub struct ClockParams {
    /// Ramsey interrogation time T_R, s.
    pub ramsey_time: f64,
    /// Full cycle period T_c (load + interrogate + detect), s.
    pub cycle_period: f64,
    /// Mean detected atom number per shot.
    pub mean_atom_number: f64,
    /// Fringe contrast C.
    pub contrast: f64,
    /// Fringe phase at the operating point, rad; π/2 is quadrature.
    pub operating_phase: f64,
    /// Quadratic field sensitivity β of the clock transition, Hz/T².
    pub quadratic_coefficient_hz_per_t2: f64,
    /// Mean collisional shift, Hz; a fractional atom-number excursion ε
    /// adds ε × this to the transition frequency.
    pub collisional_shift_hz: f64,
    pub budget: NoiseBudget,
    pub shots: usize,
    pub seed: u64,
}

impl ClockParams {
    /// Reference operating point: T_R = 1 s, T_c = 23 s, 1.5 × 10⁴ atoms.
    pub fn reference(beta_hz_per_t2: f64, collisional_shift_hz: f64) -> Self {
        ClockParams {
            ramsey_time: 1.0,
            cycle_period: 23.0,
            mean_atom_number: 1.5e4,
            contrast: 0.8,
            operating_phase: std::f64::consts::FRAC_PI_2,
            quadratic_coefficient_hz_per_t2: beta_hz_per_t2,
            collisional_shift_hz,
            budget: NoiseBudget::default(),
            shots: 10_000,
            seed: 1,
        }
    }

    fn validate(&self) -> Result<(), ClockError> {
        for (name, value) in [
            ("ramsey_time", self.ramsey_time),
            ("cycle_period", self.cycle_period),
            ("mean_atom_number", self.mean_atom_number),
        ] {
            if value <= 0.0 {
                return Err(ClockError::NonPositive { name, value });
            }
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(ClockError::BadContrast(self.contrast));
        }
        if self.shots < 2 {
            return Err(ClockError::TooFewShots {
                need: 2,
                got: self.shots,
            });
        }
        Ok(())
    }
}

/// Shot-by-shot record of a clock run.
#[derive(Debug, Clone)]
pub struct ClockSeries {
    /// Cycle period T_c, s.
    pub cycle_period: f64,
    /// Per-shot inferred frequency error, Hz.
    pub inferred_frequency_hz: Vec<f64>,
    /// Per-shot true injected frequency error, Hz (for diagnostics).
    pub true_frequency_hz: Vec<f64>,
    /// Fringe slope dN₁/dν used for inference, atoms/Hz.
    pub slope_atoms_per_hz: f64,
}

impl ClockSeries {
    /// Fractional-frequency series y_k = δν_k / ν₀.
    pub fn fractional(&self) -> Vec<f64> {
        self.inferred_frequency_hz
            .iter()
            .map(|f| f / CARRIER_HZ)
            .collect()
    }

    pub fn rms_hz(&self) -> f64 {
        let n = self.inferred_frequency_hz.len() as f64;
        (self
            .inferred_frequency_hz
            .iter()
            .map(|f| f * f)
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

/// Fringe slope dN₁/dν at the operating phase, atoms/Hz.
///
/// N₁(ν) = N̄/2 · [1 + C cos(φ_op + 2πνT_R)], so the magnitude at quadrature
/// is π N̄ C T_R.
pub fn fringe_slope(
    mean_atom_number: f64,
    contrast: f64,
    ramsey_time: f64,
    operating_phase: f64,
) -> f64 {
    -std::f64::consts::PI * mean_atom_number * contrast * ramsey_time * operating_phase.sin()
}

/// Invert a detected-atom excursion into a frequency error via the fringe
/// slope. Fails on zero slope (operating point at a fringe extremum).
pub fn n1_to_frequency(delta_n1: f64, slope_atoms_per_hz: f64) -> Result<f64, ClockError> {
    if slope_atoms_per_hz == 0.0 {
        return Err(ClockError::ZeroSlope(0.0));
    }
    Ok(delta_n1 / slope_atoms_per_hz)
}

/// Run a sequence of clock shots with the given noise budget and infer the
/// per-shot frequency error from the atom-number signal.
pub fn run_clock(params: &ClockParams) -> Result<ClockSeries, ClockError> {
    params.validate()?;
    if params.operating_phase.sin().abs() < 1e-6 {
        return Err(ClockError::ZeroSlope(params.operating_phase));
    }
    let slope = fringe_slope(
        params.mean_atom_number,
        params.contrast,
        params.ramsey_time,
        params.operating_phase,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let beta = params.quadratic_coefficient_hz_per_t2;
    let b_off = params.budget.field_offset_t;
    let n_nominal_half = 0.5 * params.mean_atom_number;
    let mut inferred = Vec::with_capacity(params.shots);
    let mut truth = Vec::with_capacity(params.shots);
    for _ in 0..params.shots {
        let g: f64 = rng.sample(StandardNormal);
        let db = params.budget.field_jitter_t * g;
        // second-order Zeeman error of this shot relative to the magic point
        let dnu_field = beta * ((b_off + db) * (b_off + db));
        let eps: f64 = params.budget.atom_number_fraction * rng.sample::<f64, _>(StandardNormal);
        let dnu_coll = params.collisional_shift_hz * eps;
        let dnu = dnu_field + dnu_coll;
        truth.push(dnu);
        let n_tot = params.mean_atom_number * (1.0 + eps);
        let phase = params.operating_phase + 2.0 * std::f64::consts::PI * dnu * params.ramsey_time;
        let det: f64 = params.budget.detection_atoms_rms * rng.sample::<f64, _>(StandardNormal);
        let n1 = 0.5 * n_tot * (1.0 + params.contrast * phase.cos()) + det;
        // inference uses the nominal operating point only
        let n1_nominal = n_nominal_half * (1.0 + params.contrast * params.operating_phase.cos());
        inferred.push(n1_to_frequency(n1 - n1_nominal, slope)?);
    }
    Ok(ClockSeries {
        cycle_period: params.cycle_period,
        inferred_frequency_hz: inferred,
        true_frequency_hz: truth,
        slope_atoms_per_hz: slope,
    })
}

/// One point of an Allan-deviation curve.
#[derive(Debug, Clone, Copy)]
pub struct AllanPoint {
    /// Averaging time τ = m·T_c, s.
    pub tau: f64,
    /// Overlapping Allan deviation σ_y(τ).
    pub sigma: f64,
    /// Number of squared differences averaged.
    pub pairs: usize,
}

/// Overlapping Allan deviation of a fractional-frequency series sampled at
/// interval `t0` for each averaging factor in `ms`.
///
/// σ²(mτ₀) = ⟨(ȳ_{k+m} − ȳ_k)²⟩/2 with ȳ_k the average of m consecutive
/// samples starting at k, the mean over all n−2m+1 overlapping pairs.
pub fn allan_deviation(y: &[f64], t0: f64, ms: &[usize]) -> Result<Vec<AllanPoint>, ClockError> {
    if t0 <= 0.0 {
        return Err(ClockError::NonPositive {
            name: "t0",
            value: t0,
        });
    }
    if y.len() < 4 {
        return Err(ClockError::TooFewShots {
            need: 4,
            got: y.len(),
        });
    }
    // prefix sums for O(1) block averages
    let mut prefix = Vec::with_capacity(y.len() + 1);
    prefix.push(0.0);
    for v in y {
        prefix.push(prefix.last().unwrap() + v);
    }
    let block = |k: usize, m: usize| (prefix[k + m] - prefix[k]) / m as f64;
    let mut out = Vec::with_capacity(ms.len());
    for &m in ms {
        if m == 0 {
            return Err(ClockError::NonPositive {
                name: "m",
                value: 0.0,
            });
        }
        if y.len() < 2 * m + 1 {
            return Err(ClockError::TauTooLong { m, n: y.len() });
        }
        let pairs = y.len() - 2 * m + 1;
        let mut acc = 0.0;
        for k in 0..pairs {
            let d = block(k + m, m) - block(k, m);
            acc += d * d;
        }
        out.push(AllanPoint {
            tau: m as f64 * t0,
            sigma: (acc / (2.0 * pairs as f64)).sqrt(),
            pairs,
        });
    }
    Ok(out)
}

/// Default averaging factors: roughly logarithmic, 1 … n/8.
pub fn default_averaging_factors(n: usize) -> Vec<usize> {
    let mut ms = Vec::new();
    let mut m = 1usize;
    while 2 * m + 1 <= n && m <= n / 8 {
        ms.push(m);
        let next = (m as f64 * 1.6).ceil() as usize;
        m = next.max(m + 1);
    }
    if ms.is_empty() {
        ms.push(1);
    }
    ms
}

/// Result of fitting σ_y(τ) = A·τ^p on log-log axes.
#[derive(Debug, Clone, Copy)]
pub struct StabilityFit {
    /// Prefactor at τ = 1 s for the fixed-slope fit: σ_y(τ) = coefficient·τ^(−1/2).
    pub coefficient: f64,
    /// Best-fit free exponent p.
    pub free_exponent: f64,
    /// rms log₁₀ residual of the fixed −1/2 fit.
    pub residual_log10: f64,
    /// Set when the free exponent departs from −1/2 by more than 0.1: the
    /// series is not white-frequency-noise limited.
    pub departs_from_white: bool,
}

/// Fit a stability curve assuming white frequency noise (σ ∝ τ^(−1/2)), and
/// also report the free log-log slope as a diagnostic.
pub fn fit_stability(points: &[AllanPoint]) -> Result<StabilityFit, ClockError> {
    if points.len() < 3 {
        return Err(ClockError::TooFewTaus(points.len()));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.tau.log10(), p.sigma.log10()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx) * (l.0 - mx)).sum();
    let free_exponent = sxy / sxx;
    // fixed slope −1/2: intercept = mean(log σ + 0.5 log τ)
    let intercept = logs.iter().map(|l| l.1 + 0.5 * l.0).sum::<f64>() / n;
    let residual_log10 = (logs
        .iter()
        .map(|l| (l.1 - (intercept - 0.5 * l.0)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(StabilityFit {
        coefficient: 10f64.powf(intercept),
        free_exponent,
        residual_log10,
        departs_from_white: (free_exponent + 0.5).abs() > 0.1,
    })
}
