//! Least-squares fitting of (damped) sinusoids to fringe data.
//!
//! A small Levenberg–Marquardt loop with analytic Jacobians; parameter
//! uncertainties come from the quadratic expansion at the optimum (no
//! resampling), keeping results deterministic.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("scan must span at least {need:.1} oscillation periods, spans {got:.2}")]
    TooShortScan { need: f64, got: f64 },
    #[error("no dominant spectral peak; data is not oscillatory")]
    DegenerateSpectrum,
    #[error("fit did not converge after {0} restarts")]
    NoConvergence(usize),
    #[error("mismatched input lengths: {0} times vs {1} values")]
    LengthMismatch(usize, usize),
}

/// Result of a damped-sine fit a·e^(−t/τ)·sin(2πft+φ) + c.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// rad.
    pub phase: f64,
    pub offset: f64,
    /// 1/e decay time τ_c (s).
    pub decay_time: f64,
    /// 1σ uncertainties for (amplitude, frequency, phase, offset, decay_time).
    pub uncertainties: [f64; 5],
    pub residual_rms: f64,
    /// Set when the fitted τ_c exceeds the scan length: the data constrains
    /// only a lower bound on the decay time.
    pub decay_is_lower_bound: bool,
}

/// Result of a pure-sine fit a·sin(2πfx+φ) + c.
#[derive(Debug, Clone)]
pub struct SineFit {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual_std: f64,
}

/// Dominant frequency of `values` by a dense scan of the discrete spectrum
/// power |Σ (y−ȳ) e^(−2πift)|², DC excluded.
fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<f64, FitError> {
    let n = times.len();
    let span = times[n - 1] - times[0];
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut best = (0.0_f64, 0.0_f64);
    let f_max = 0.5 * n as f64 / span; // Nyquist-like cap for ~uniform scans
    let steps = 4 * n;
    for k in 1..=steps {
        let f = f_max * k as f64 / steps as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, y) in times.iter().zip(values) {
            let ph = 2.0 * std::f64::consts::PI * f * t;
            re += (y - mean) * ph.cos();
            im -= (y - mean) * ph.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (f, p);
        }
    }
    let variance = values.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
    // an oscillation concentrates a sizable fraction of the variance at the peak
    if best.1 < 0.05 * variance * n as f64 || best.0 * span < 0.5 {
        return Err(FitError::DegenerateSpectrum);
    }
    Ok(best.0)
}

/// Linear LSQ of y ≈ p·sin(2πft) + q·cos(2πft) + c at fixed f.
fn quadrature_fit(times: &[f64], values: &[f64], f: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let (mut ss, mut sc, mut s1, mut scc, mut s1c, mut ys, mut yc, mut y1) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in times.iter().zip(values) {
        let ph = 2.0 * std::f64::consts::PI * f * t;
        let (s, c) = ph.sin_cos();
        ss += s * s;
        sc += s * c;
        s1 += s;
        scc += c * c;
        s1c += c;
        ys += y * s;
        yc += y * c;
        y1 += y;
    }
    let m = nalgebra::Matrix3::new(ss, sc, s1, sc, scc, s1c, s1, s1c, n);
    let b = nalgebra::Vector3::new(ys, yc, y1);
    match m.lu().solve(&b) {
        Some(x) => (x[0], x[1], x[2]),
        None => (0.0, 0.0, y1 / n),
    }
}

struct DampedSine;
struct PureSine;

trait Model {
    const NPAR: usize;
    fn eval(p: &[f64], t: f64) -> f64;
    fn jacobian_row(p: &[f64], t: f64, row: &mut [f64]);
}

impl Model for DampedSine {
    // p = [a, f, phi, c, r] with r = 1/tau
    const NPAR: usize = 5;

    fn eval(p: &[f64], t: f64) -> f64 {
        p[0] * (-p[4] * t).exp() * (2.0 * std::f64::consts::PI * p[1] * t + p[2]).sin() + p[3]
    }

    fn jacobian_row(p: &[f64], t: f64, row: &mut [f64]) {
        let env = (-p[4] * t).exp();
        let ph = 2.0 * std::f64::consts::PI * p[1] * t + p[2];
        let (s, c) = ph.sin_cos();
        row[0] = env * s;
        row[1] = p[0] * env * c * 2.0 * std::f64::consts::PI * t;
        row[2] = p[0] * env * c;
        row[3] = 1.0;
        row[4] = -t * p[0] * env * s;
    }
}

impl Model for PureSine {
    // p = [a, f, phi, c]
    const NPAR: usize = 4;

    fn eval(p: &[f64], t: f64) -> f64 {
        p[0] * (2.0 * std::f64::consts::PI * p[1] * t + p[2]).sin() + p[3]
    }

    fn jacobian_row(p: &[f64], t: f64, row: &mut [f64]) {
        let ph = 2.0 * std::f64::consts::PI * p[1] * t + p[2];
        let (s, c) = ph.sin_cos();
        row[0] = s;
        row[1] = p[0] * c * 2.0 * std::f64::consts::PI * t;
        row[2] = p[0] * c;
        row[3] = 1.0;
    }
}

/// Levenberg–Marquardt; returns (params, ssr, covariance).
fn levenberg_marquardt<M: Model>(
    times: &[f64],
    values: &[f64],
    init: Vec<f64>,
) -> (Vec<f64>, f64, DMatrix<f64>) {
    let n = times.len();
    let npar = M::NPAR;
    let mut p = init;
    let ssr_of = |p: &[f64]| -> f64 {
        times
            .iter()
            .zip(values)
            .map(|(t, y)| (y - M::eval(p, *t)).powi(2))
            .sum()
    };
    let mut ssr = ssr_of(&p);
    let mut lambda = 1e-3;
    let mut jac = DMatrix::zeros(n, npar);
    let mut resid = DVector::zeros(n);
    for _ in 0..300 {
        for (i, (t, y)) in times.iter().zip(values).enumerate() {
            let mut row = vec![0.0; npar];
            M::jacobian_row(&p, *t, &mut row);
            for j in 0..npar {
                jac[(i, j)] = row[j];
            }
            resid[i] = y - M::eval(&p, *t);
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &resid;
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj.clone();
            for j in 0..npar {
                damped[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            let c_ssr = ssr_of(&cand);
            if c_ssr < ssr {
                let rel = (ssr - c_ssr) / ssr.max(1e-300);
                p = cand;
                ssr = c_ssr;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    break;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    // covariance from the quadratic expansion at the optimum
    for (i, (t, y)) in times.iter().zip(values).enumerate() {
        let mut row = vec![0.0; npar];
        M::jacobian_row(&p, *t, &mut row);
        for j in 0..npar {
            jac[(i, j)] = row[j];
        }
        resid[i] = y - M::eval(&p, *t);
    }
    let jtj = jac.transpose() * &jac;
    let dof = (n.saturating_sub(npar)).max(1) as f64;
    let s2 = ssr / dof;
    let cov = match jtj.clone().try_inverse() {
        Some(inv) => inv * s2,
        None => DMatrix::from_element(npar, npar, f64::NAN),
    };
    (p, ssr, cov)
}

/// Fit a·e^(−t/τ)·sin(2πft+φ) + c to a Ramsey fringe record.
///
/// Needs ≥ 16 samples spanning ≥ 2 oscillation periods. Initialization: f
/// from the dominant spectral peak, amplitude from peak-to-peak/2, τ from a
/// log-envelope regression.
pub fn fit_damped_sine(times: &[f64], values: &[f64]) -> Result<FitResult, FitError> {
    if times.len() != values.len() {
        return Err(FitError::LengthMismatch(times.len(), values.len()));
    }
    if times.len() < 16 {
        return Err(FitError::TooFewSamples {
            need: 16,
            got: times.len(),
        });
    }
    let span = times[times.len() - 1] - times[0];
    let f0 = dominant_frequency(times, values)?;
    if f0 * span < 2.0 {
        return Err(FitError::TooShortScan {
            need: 2.0,
            got: f0 * span,
        });
    }
    let (ps, pc, c0) = quadrature_fit(times, values, f0);
    let phi0 = pc.atan2(ps);
    let ymin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let ymax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let a0 = 0.5 * (ymax - ymin);

    // envelope regression: per-block peak of |y - c| against block time
    let blocks = 8.min(times.len() / 4).max(2);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for b in 0..blocks {
        let lo = times[0] + span * b as f64 / blocks as f64;
        let hi = times[0] + span * (b + 1) as f64 / blocks as f64;
        let mut peak: f64 = 0.0;
        let mut tsum = 0.0;
        let mut cnt = 0;
        for (t, y) in times.iter().zip(values) {
            if *t >= lo && *t <= hi {
                peak = peak.max((y - c0).abs());
                tsum += t;
                cnt += 1;
            }
        }
        if cnt > 0 && peak > 0.0 {
            xs.push(tsum / cnt as f64);
            ys.push(peak.ln());
        }
    }
    let r0 = if xs.len() >= 2 {
        let nx = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / nx;
        let my = ys.iter().sum::<f64>() / nx;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        (-sxy / sxx).max(0.0)
    } else {
        0.0
    };

    let init = vec![a0, f0, phi0, c0, r0];
    let (p, ssr, cov) = levenberg_marquardt::<DampedSine>(times, values, init);
    let n = times.len() as f64;
    let residual_rms = (ssr / n).sqrt();

    let (mut a, f, mut phi, c, r) = (p[0], p[1], p[2], p[3], p[4]);
    if a < 0.0 {
        a = -a;
        phi += std::f64::consts::PI;
    }
    let tau = if r > 0.0 { 1.0 / r } else { f64::INFINITY };
    let sigma = |i: usize| cov[(i, i)].max(0.0).sqrt();
    // sigma_tau = sigma_r / r^2
    let sigma_tau = if r > 0.0 {
        sigma(4) / (r * r)
    } else {
        f64::INFINITY
    };
    Ok(FitResult {
        amplitude: a,
        frequency: f,
        phase: phi.rem_euclid(2.0 * std::f64::consts::PI),
        offset: c,
        decay_time: tau,
        uncertainties: [sigma(0), sigma(1), sigma(2), sigma(3), sigma_tau],
        residual_rms,
        decay_is_lower_bound: tau > span,
    })
}

/// Fit a·sin(2πfx+φ) + c starting from a design frequency guess, then refine.
pub fn fit_sine(xs: &[f64], values: &[f64], f_guess: f64) -> Result<SineFit, FitError> {
    if xs.len() != values.len() {
        return Err(FitError::LengthMismatch(xs.len(), values.len()));
    }
    if xs.len() < 8 {
        return Err(FitError::TooFewSamples {
            need: 8,
            got: xs.len(),
        });
    }
    let (ps, pc, c0) = quadrature_fit(xs, values, f_guess);
    let a0 = (ps * ps + pc * pc).sqrt();
    let phi0 = pc.atan2(ps);
    let init = vec![a0, f_guess, phi0, c0];
    let (p, ssr, _cov) = levenberg_marquardt::<PureSine>(xs, values, init);
    let (mut a, f, mut phi, c) = (p[0], p[1], p[2], p[3]);
    if a < 0.0 {
        a = -a;
        phi += std::f64::consts::PI;
    }
    Ok(SineFit {
        amplitude: a,
        frequency: f,
        phase: phi.rem_euclid(2.0 * std::f64::consts::PI),
        offset: c,
        residual_std: (ssr / xs.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synth(
        n: usize,
        span: f64,
        a: f64,
        f: f64,
        phi: f64,
        c: f64,
        tau: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect();
        let values = times
            .iter()
            .map(|t| a * (-t / tau).exp() * (2.0 * std::f64::consts::PI * f * t + phi).sin() + c)
            .collect();
        (times, values)
    }

    #[test]
    fn noiseless_roundtrip_to_one_percent() {
        // tau = 2.8 s, f = 6.4 Hz, 120 points over 1.5 s
        let (t, y) = synth(120, 1.5, 0.45, 6.4, 0.7, 0.5, 2.8);
        let fit = fit_damped_sine(&t, &y).unwrap();
        assert_relative_eq!(fit.amplitude, 0.45, max_relative = 0.01);
        assert_relative_eq!(fit.frequency, 6.4, max_relative = 0.01);
        assert_relative_eq!(fit.offset, 0.5, max_relative = 0.01);
        assert_relative_eq!(fit.decay_time, 2.8, max_relative = 0.01);
        assert!(fit.residual_rms < 1e-8);
        assert!(fit.decay_is_lower_bound); // 2.8 s > 1.5 s scan
    }

    #[test]
    fn resolvable_decay_not_flagged() {
        let (t, y) = synth(200, 3.0, 1.0, 6.4, 0.3, 0.0, 0.8);
        let fit = fit_damped_sine(&t, &y).unwrap();
        assert_relative_eq!(fit.decay_time, 0.8, max_relative = 0.01);
        assert!(!fit.decay_is_lower_bound);
    }

    #[test]
    fn undamped_sine_reports_lower_bound() {
        let (t, y) = synth(150, 2.0, 1.0, 5.0, 0.1, 0.0, f64::INFINITY);
        let fit = fit_damped_sine(&t, &y).unwrap();
        assert!(fit.decay_is_lower_bound);
        assert!(fit.decay_time > 2.0);
    }

    #[test]
    fn noisy_fit_recovers_parameters() {
        let (t, mut y) = synth(120, 1.5, 0.5, 6.4, 1.1, 0.5, 2.8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // S/N ~ 6: noise sigma = peak-to-peak / 6
        let sigma = 1.0 / 6.0 * 0.5 * 2.0 / 2.0;
        for v in &mut y {
            *v += sigma
                * (rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5)
                * 2.0;
        }
        let fit = fit_damped_sine(&t, &y).unwrap();
        assert_relative_eq!(fit.frequency, 6.4, max_relative = 0.05);
        assert!(fit.amplitude > 0.3 && fit.amplitude < 0.7);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let y = vec![1.0; 50];
        assert!(matches!(
            fit_damped_sine(&t, &y),
            Err(FitError::DegenerateSpectrum)
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let y = t.clone();
        assert!(matches!(
            fit_damped_sine(&t, &y),
            Err(FitError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn sine_fit_recovers_contrast_parameters() {
        let f = 3.0;
        let xs: Vec<f64> = (0..48).map(|i| i as f64 / 48.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.3 * (2.0 * std::f64::consts::PI * f * x + 0.4).sin() + 0.5)
            .collect();
        let fit = fit_sine(&xs, &ys, 3.2).unwrap();
        assert_relative_eq!(fit.amplitude, 0.3, max_relative = 1e-3);
        assert_relative_eq!(fit.frequency, 3.0, max_relative = 1e-3);
        assert_relative_eq!(fit.offset, 0.5, max_relative = 1e-3);
        assert!(fit.residual_std < 1e-6);
    }

    #[test]
    fn uncertainties_scale_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut run = |sigma: f64| {
            let (t, mut y) = synth(200, 2.0, 1.0, 6.4, 0.2, 0.0, 1.5);
            for v in &mut y {
                let g: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                *v += sigma * g;
            }
            fit_damped_sine(&t, &y).unwrap().uncertainties[1]
        };
        let lo = run(0.01);
        let hi = run(0.1);
        assert!(hi > 3.0 * lo, "freq sigma {lo} -> {hi}");
    }
}
