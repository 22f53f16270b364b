//! Trap location and characterization: potential minima, harmonic
//! frequencies and principal axes, magic-field bias calibration, and
//! placement of the trap at a requested atom–surface distance.

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::fieldmap::{ChipLayout, FieldError, FieldSource, Mat3, Vec3, EXCLUSION_RADIUS};
use crate::hyperfine::HyperfineState;

/// Convergence threshold on ‖∇|B|‖ at the minimum (T/m).
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

/// Bias calibration tolerance on |B_min| (T); 10⁻⁴ G.
pub const CALIBRATION_TOLERANCE: f64 = 1e-4 * 1e-4;

/// Distance placement tolerance (m).
pub const DISTANCE_TOLERANCE: f64 = 0.05e-6;

const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum TrapError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("minimization did not converge in {0} iterations (|grad| = {1:.3e} T/m)")]
    NoConvergence(usize, f64),
    #[error(
        "stationary point at {position:?} is a saddle (Hessian eigenvalue {eigenvalue:.3e} T/m^2)"
    )]
    Saddle { position: Vec3, eigenvalue: f64 },
    #[error("state {0} is not trappable (m_F g_F <= 0)")]
    Untrappable(HyperfineState),
    #[error("bias calibration bracket failure on axis {axis}: |B_min| - target has no sign change; scan: {trace:?}")]
    BracketFailure { axis: usize, trace: Vec<(f64, f64)> },
    #[error("target distance {0:.3e} m unreachable within parameter bounds")]
    UnreachableDistance(f64),
    #[error("target distance {0:.3e} m is below the exclusion zone")]
    DistanceTooSmall(f64),
}

/// Which layout parameter a distance placement is allowed to adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustable {
    BiasComponent(usize),
    SegmentCurrent(usize),
}

/// Result of locating and expanding a trap minimum.
#[derive(Debug, Clone)]
pub struct TrapAnalysis {
    pub minimum_position: Vec3,
    /// |B| at the minimum (T).
    pub b_min: f64,
    /// Field vector at the minimum (T).
    pub b_min_vector: Vec3,
    /// Trap frequencies in Hz, sorted ascending.
    pub frequencies: [f64; 3],
    /// Principal axes (unit vectors) matching `frequencies`.
    pub axes: [Vec3; 3],
    /// Atom–surface distance d (m).
    pub distance_d: f64,
    /// Atom–wire distance d_w = d + h_e (m).
    pub distance_dw: f64,
    /// |B| Hessian eigenvalues matching `frequencies` (T/m²).
    pub curvatures: [f64; 3],
    /// ‖∇|B|‖ at the reported minimum (T/m).
    pub residual_gradient: f64,
}

/// Minimize f(r) = |B|(r) + linear·r over a field source.
///
/// Damped Newton on the |B| Hessian with a gradient-descent fallback when the
/// Newton step is not a descent direction.
fn minimize<S: FieldSource>(
    source: &S,
    seed: Vec3,
    linear: Vec3,
) -> Result<(Vec3, f64), TrapError> {
    let f = |p: &Vec3| -> Result<f64, FieldError> { Ok(source.field(p)?.norm() + linear.dot(p)) };
    let grad =
        |p: &Vec3| -> Result<Vec3, FieldError> { Ok(source.magnitude_gradient(p)? + linear) };

    let mut p = seed;
    let mut g = grad(&p)?;
    for iter in 0..MAX_ITERATIONS {
        if g.norm() < GRADIENT_TOLERANCE {
            return Ok((p, g.norm()));
        }
        let h = source.magnitude_hessian(&p)?;
        // eigenvalue-clamped Newton: flat or slightly-negative curvature
        // directions (FD noise on an unconfined axis) get a floored
        // curvature instead of breaking the factorization
        let eig = h.symmetric_eigen();
        let lam_max = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        let floor = (1e-6 * lam_max).max(1e-30);
        let mut step = Vec3::zeros();
        for i in 0..3 {
            let v = eig.eigenvectors.column(i).into_owned();
            step -= v * (g.dot(&v) / eig.eigenvalues[i].max(floor));
        }
        if step.dot(&g) >= 0.0 {
            step = -g * 1e-2 / lam_max.max(1e-30);
        }
        // backtracking line search
        let f0 = f(&p)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = p + step * t;
            match f(&cand) {
                Ok(fc) if fc < f0 => {
                    p = cand;
                    accepted = true;
                    break;
                }
                _ => t *= 0.5,
            }
        }
        if !accepted {
            // stuck: gradient tiny relative to curvature noise
            let gn = g.norm();
            if gn < 1e2 * GRADIENT_TOLERANCE {
                return Ok((p, gn));
            }
            return Err(TrapError::NoConvergence(iter, gn));
        }
        g = grad(&p)?;
    }
    Err(TrapError::NoConvergence(MAX_ITERATIONS, g.norm()))
}

/// Harmonic expansion of |B| at `position` for a trapped state: frequencies,
/// axes, and curvatures, sorted ascending.
fn expand<S: FieldSource>(
    source: &S,
    position: &Vec3,
    mf_gf: f64,
    bohr_magneton: f64,
    mass: f64,
) -> Result<([f64; 3], [Vec3; 3], [f64; 3]), TrapError> {
    let hess: Mat3 = source.magnitude_hessian(position)?;
    let eig = SymmetricEigen::new(hess);
    let mut pairs: Vec<(f64, Vec3)> = (0..3)
        .map(|i| (eig.eigenvalues[i], Vec3::from(eig.eigenvectors.column(i))))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // eigenvalues within FD noise of zero are clamped (a guide direction with
    // no confinement); a genuinely negative eigenvalue is a saddle
    let noise_floor = 1e-7 * pairs[2].0.abs().max(1e-12);
    if pairs[0].0 < -noise_floor {
        return Err(TrapError::Saddle {
            position: *position,
            eigenvalue: pairs[0].0,
        });
    }
    let mut freqs = [0.0; 3];
    let mut axes = [Vec3::zeros(); 3];
    let mut curv = [0.0; 3];
    for (i, (lambda, axis)) in pairs.into_iter().enumerate() {
        let lam = lambda.max(0.0);
        freqs[i] = (lam * mf_gf * bohr_magneton / mass).sqrt() / (2.0 * std::f64::consts::PI);
        axes[i] = axis;
        curv[i] = lam;
    }
    Ok((freqs, axes, curv))
}

/// Locate a trap minimum for `state` starting from `seed` and expand it.
pub fn find_minimum(
    layout: &ChipLayout,
    state: HyperfineState,
    seed: Vec3,
    gravity_on: bool,
) -> Result<TrapAnalysis, TrapError> {
    if !state.is_trappable() {
        return Err(TrapError::Untrappable(state));
    }
    let c = &layout.constants;
    let mf_gf = state.mf_gf();
    // gravity enters the minimized function as an equivalent |B| gradient
    let linear = if gravity_on {
        -layout.gravity_direction * (c.rb87_mass * c.gravity / (mf_gf * c.bohr_magneton))
    } else {
        Vec3::zeros()
    };
    let (position, residual) = minimize(layout, seed, linear)?;
    let (frequencies, axes, curvatures) =
        expand(layout, &position, mf_gf, c.bohr_magneton, c.rb87_mass)?;
    let b = layout.field(&position)?;
    let d = layout.surface_distance(&position);
    Ok(TrapAnalysis {
        minimum_position: position,
        b_min: b.norm(),
        b_min_vector: b,
        frequencies,
        axes,
        distance_d: d,
        distance_dw: d + layout.wire_depth,
        curvatures,
        residual_gradient: residual,
    })
}

/// Minimize |B| of an arbitrary field source (no gravity, no state); used by
/// oracles and by the mw module.
pub fn find_field_minimum<S: FieldSource>(
    source: &S,
    seed: Vec3,
) -> Result<(Vec3, f64), TrapError> {
    let (p, _res) = minimize(source, seed, Vec3::zeros())?;
    let b = source.field(&p)?.norm();
    Ok((p, b))
}

/// Coarse grid scan for a minimization seed: the grid point with the lowest
/// |B| in a box of `half_width` around `center`, `n` points per axis.
pub fn coarse_seed(layout: &ChipLayout, center: Vec3, half_width: Vec3, n: usize) -> Vec3 {
    let mut best = center;
    let mut best_b = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let frac = |idx: usize| 2.0 * (idx as f64 + 0.5) / n as f64 - 1.0;
                let p = center
                    + Vec3::new(
                        half_width.x * frac(i),
                        half_width.y * frac(j),
                        half_width.z * frac(k),
                    );
                if let Ok(b) = layout.field(&p) {
                    let m = b.norm();
                    if m < best_b {
                        best_b = m;
                        best = p;
                    }
                }
            }
        }
    }
    best
}

/// Adjust one bias component so that |B| at the trap minimum equals
/// `target_b0` within 10⁻⁴ G. Returns the adjusted layout and its analysis.
pub fn calibrate_bias(
    layout: &ChipLayout,
    state: HyperfineState,
    seed: Vec3,
    free_axis: usize,
    target_b0: f64,
) -> Result<(ChipLayout, TrapAnalysis), TrapError> {
    assert!(free_axis < 3, "free_axis must be 0, 1, or 2");
    let eval = |value: f64, seed: Vec3| -> Result<(f64, TrapAnalysis), TrapError> {
        let mut l = layout.clone();
        l.bias[free_axis] = value;
        let ta = find_minimum(&l, state, seed, false)?;
        Ok((ta.b_min - target_b0, ta))
    };

    let start = layout.bias[free_axis];
    let (f_start, ta_start) = eval(start, seed)?;
    if f_start.abs() < CALIBRATION_TOLERANCE {
        let mut l = layout.clone();
        l.bias[free_axis] = start;
        return Ok((l, ta_start));
    }

    // expand a bracket around the starting value
    let mut trace = vec![(start, f_start)];
    let scale = start.abs().max(target_b0).max(1e-5);
    let mut bracket: Option<((f64, Vec3), (f64, Vec3))> = None;
    for sign in [1.0, -1.0] {
        let mut step = 0.05 * scale;
        let mut prev = (start, f_start, ta_start.minimum_position);
        for _ in 0..40 {
            let v = prev.0 + sign * step;
            match eval(v, prev.2) {
                Ok((fv, ta)) => {
                    trace.push((v, fv));
                    if fv.signum() != f_start.signum() {
                        bracket = Some(((prev.0, prev.2), (v, ta.minimum_position)));
                        break;
                    }
                    prev = (v, fv, ta.minimum_position);
                    step *= 1.6;
                }
                Err(_) => break, // trap lost in this direction
            }
        }
        if bracket.is_some() {
            break;
        }
    }
    let ((mut lo, mut lo_seed), (mut hi, _)) = bracket.ok_or(TrapError::BracketFailure {
        axis: free_axis,
        trace: trace.clone(),
    })?;
    let (mut f_lo, _) = eval(lo, lo_seed)?;

    // bisection with a secant refinement step
    for _ in 0..100 {
        let (_, ta_lo) = eval(lo, lo_seed)?;
        let mid = 0.5 * (lo + hi);
        let (f_mid, ta_mid) = eval(mid, ta_lo.minimum_position)?;
        if f_mid.abs() < CALIBRATION_TOLERANCE {
            let mut l = layout.clone();
            l.bias[free_axis] = mid;
            return Ok((l, ta_mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
            lo_seed = ta_mid.minimum_position;
        } else {
            hi = mid;
        }
    }
    Err(TrapError::NoConvergence(100, f_lo.abs()))
}

/// Place the trap minimum at atom–surface distance `target_d` by adjusting
/// one declared parameter, then re-calibrate the bias along `calibrate_axis`
/// to `target_b0`.
#[allow(clippy::too_many_arguments)]
pub fn place_at_distance(
    layout: &ChipLayout,
    state: HyperfineState,
    seed: Vec3,
    adjust: Adjustable,
    bounds: (f64, f64),
    target_d: f64,
    calibrate_axis: usize,
    target_b0: f64,
) -> Result<(ChipLayout, TrapAnalysis), TrapError> {
    if target_d < EXCLUSION_RADIUS {
        return Err(TrapError::DistanceTooSmall(target_d));
    }
    // Calibrating the bias moves the minimum, which perturbs the distance;
    // alternate placement and calibration until both hold simultaneously.
    let mut base = layout.clone();
    let mut seed = seed;
    let mut last = None;
    for _ in 0..6 {
        let (placed, ta_placed) = place_round(&base, state, seed, adjust, bounds, target_d)?;
        let (cal, ta) = calibrate_bias(
            &placed,
            state,
            ta_placed.minimum_position,
            calibrate_axis,
            target_b0,
        )?;
        let err = (ta.distance_d - target_d).abs();
        seed = ta.minimum_position;
        base = cal.clone();
        last = Some((cal, ta));
        if err < DISTANCE_TOLERANCE {
            break;
        }
    }
    last.ok_or(TrapError::UnreachableDistance(target_d))
}

fn place_round(
    layout: &ChipLayout,
    state: HyperfineState,
    seed: Vec3,
    adjust: Adjustable,
    bounds: (f64, f64),
    target_d: f64,
) -> Result<(ChipLayout, TrapAnalysis), TrapError> {
    let set = |l: &mut ChipLayout, v: f64| match adjust {
        Adjustable::BiasComponent(i) => l.bias[i] = v,
        Adjustable::SegmentCurrent(i) => l.segments[i].current = v,
    };
    let eval = |value: f64, seed: Vec3| -> Result<(f64, TrapAnalysis), TrapError> {
        let mut l = layout.clone();
        set(&mut l, value);
        let ta = find_minimum(&l, state, seed, false)?;
        Ok((ta.distance_d - target_d, ta))
    };

    // Bracket by marching outward from the layout's current parameter value,
    // chaining each converged minimum as the seed for the next step so the
    // search tracks one trap basin as the parameter deforms it.
    let n_scan = 48;
    let start = match adjust {
        Adjustable::BiasComponent(i) => layout.bias[i],
        Adjustable::SegmentCurrent(i) => layout.segments[i].current,
    }
    .clamp(bounds.0.min(bounds.1), bounds.0.max(bounds.1));
    let step = (bounds.1 - bounds.0).abs() / n_scan as f64;
    let mut bracket = None;
    if let Ok((f0, ta0)) = eval(start, seed) {
        if f0.abs() < DISTANCE_TOLERANCE {
            let mut l = layout.clone();
            set(&mut l, start);
            return Ok((l, ta0));
        }
        'direction: for sign in [1.0, -1.0] {
            let mut prev = (start, f0, ta0.minimum_position);
            loop {
                let v = prev.0 + sign * step;
                if v < bounds.0.min(bounds.1) || v > bounds.0.max(bounds.1) {
                    break;
                }
                match eval(v, prev.2) {
                    Ok((fv, ta)) => {
                        if fv.signum() != prev.1.signum() {
                            bracket = Some(((prev.0, prev.2), (v, ta.minimum_position)));
                            break 'direction;
                        }
                        prev = (v, fv, ta.minimum_position);
                    }
                    Err(_) => break,
                }
            }
        }
    }
    let ((mut lo, mut lo_seed), (mut hi, _)) =
        bracket.ok_or(TrapError::UnreachableDistance(target_d))?;
    let (mut f_lo, _) = eval(lo, lo_seed)?;
    let mut placed = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (f_mid, ta_mid) = eval(mid, lo_seed)?;
        if f_mid.abs() < DISTANCE_TOLERANCE {
            placed = Some((mid, ta_mid));
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
            lo_seed = ta_mid.minimum_position;
        } else {
            hi = mid;
        }
    }
    let (value, ta) = placed.ok_or(TrapError::UnreachableDistance(target_d))?;
    let mut l = layout.clone();
    set(&mut l, value);
    Ok((l, ta))
}
