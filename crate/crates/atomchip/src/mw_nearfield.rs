//! Microwave near-fields and AC Zeeman potentials.
//!
//! Hosts the exact 8×8 ground-state Hamiltonian (hyperfine + Zeeman in the
//! |m_I, m_S⟩ product basis), magnetic-dipole transition matrix elements,
//! and the perturbative AC Zeeman shifts that build state-dependent
//! potential landscapes from microwave wire currents.
//!
//! Field amplitudes are quasi-static: at distances well inside a wavelength
//! (λ ≈ 4.4 cm at the hyperfine frequency) the microwave magnetic field has
//! the same spatial profile as a dc field from the same currents.

use nalgebra::{Complex, DMatrix, SMatrix, SVector};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::fieldmap::{Vec3, WireSegment};
use crate::hyperfine::{HyperfineState, MAX_FIELD_T};

type C64 = Complex<f64>;
type M8 = SMatrix<f64, 8, 8>;
type V8 = SVector<f64, 8>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Quasi-static validity radius: warn beyond λ/20 from the source wires.
pub const NEAR_FIELD_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MwError {
    #[error("magnetic field must lie in [0, {MAX_FIELD_T}] T, got {0}")]
    FieldOutOfRange(f64),
    #[error("hamiltonian lost hermiticity: asymmetry {0}")]
    NotHermitian(f64),
    #[error("static field direction is undefined (|B| = {0} T)")]
    ZeroStaticField(f64),
    #[error("states {0} and {1} are in the same hyperfine manifold")]
    SameManifold(HyperfineState, HyperfineState),
    #[error(
        "drive is near-resonant with {lower} -> {upper}: |detuning| {detuning_hz:.3e} Hz < rabi {rabi_hz:.3e} Hz"
    )]
    NearResonant {
        lower: HyperfineState,
        upper: HyperfineState,
        detuning_hz: f64,
        rabi_hz: f64,
    },
    #[error("drive frequency must be positive, got {0} Hz")]
    BadDriveFrequency(f64),
    #[error("microwave current amplitude must be positive")]
    ZeroAmplitude,
    #[error(transparent)]
    Field(#[from] crate::fieldmap::FieldError),
    #[error(transparent)]
    Hyperfine(#[from] crate::hyperfine::HyperfineError),
}

/// Dimensionless spin operators for S = 1/2 (electron) and I = 3/2
/// (nucleus) on the 8-dimensional product basis, index = m_S block × 4 +
/// m_I offset. Only z and ladder operators are needed; x/y follow from
/// S± = Sx ± iSy.
struct SpinOperators {
    sz: M8,
    sp: M8,
    sm: M8,
    iz: M8,
    ip: M8,
    im: M8,
}

fn ladder(j: f64, m: f64) -> f64 {
    (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

impl SpinOperators {
    fn new() -> Self {
        let mut sz = M8::zeros();
        let mut sp = M8::zeros();
        let mut iz = M8::zeros();
        let mut ip = M8::zeros();
        let ms_of = |b: usize| (b / 4) as f64 - 0.5;
        let mi_of = |b: usize| (b % 4) as f64 - 1.5;
        for b in 0..8 {
            let (ms, mi) = (ms_of(b), mi_of(b));
            sz[(b, b)] = ms;
            iz[(b, b)] = mi;
            if ms < 0.0 {
                sp[(b + 4, b)] = ladder(0.5, ms);
            }
            if mi < 1.5 {
                ip[(b + 1, b)] = ladder(1.5, mi);
            }
        }
        SpinOperators {
            sz,
            sm: sp.transpose(),
            sp,
            iz,
            im: ip.transpose(),
            ip,
        }
    }
}

/// Exact ground-state Hamiltonian H/h in Hz: (ν_hfs/2)·I·S +
/// μ_B B (g_S S_z + g_I I_z)/h, quantization axis along the static field.
pub fn hamiltonian(b: f64, constants: &PhysicalConstants) -> Result<M8, MwError> {
    if !(0.0..=MAX_FIELD_T).contains(&b) || !b.is_finite() {
        return Err(MwError::FieldOutOfRange(b));
    }
    let ops = SpinOperators::new();
    let a = constants.hyperfine_splitting / 2.0;
    let i_dot_s = ops.iz * ops.sz + (ops.ip * ops.sm + ops.im * ops.sp) * 0.5;
    let zeeman = (ops.sz * constants.electron_g_factor + ops.iz * constants.nuclear_g_factor)
        * (constants.bohr_magneton * b / constants.planck);
    let h = i_dot_s * a + zeeman;
    let asym = (h - h.transpose()).amax();
    if asym > 1e-14 * h.amax() {
        return Err(MwError::NotHermitian(asym));
    }
    Ok(h)
}

/// One labeled eigenstate of the 8×8 Hamiltonian.
#[derive(Debug, Clone)]
pub struct Level {
    pub state: HyperfineState,
    /// E/h in Hz.
    pub energy_hz: f64,
    /// Eigenvector over the |m_I, m_S⟩ basis (real; phase fixed so the
    /// largest component is positive).
    pub vector: V8,
}

/// All eight labeled eigenstates at one static field magnitude.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub levels: Vec<Level>,
    pub field_t: f64,
}

impl Eigensystem {
    pub fn level(&self, state: HyperfineState) -> &Level {
        self.levels
            .iter()
            .find(|l| l.state == state)
            .expect("all 8 states are always present")
    }

    pub fn energy(&self, state: HyperfineState) -> f64 {
        self.level(state).energy_hz
    }

    /// Transition frequency upper − lower between any two labeled states, Hz.
    pub fn transition(&self, lower: HyperfineState, upper: HyperfineState) -> f64 {
        self.energy(upper) - self.energy(lower)
    }
}

/// Diagonalize the Hamiltonian at field magnitude `b`, labeling eigenpairs
/// (F, m_F) by adiabatic continuation from B = 0.
///
/// The matrix is block-diagonal in m_F = m_S + m_I (blocks of size 1 or 2);
/// within a two-state block the upper branch carries the F = 2 label, which
/// is the B = 0 assignment continued smoothly through the whole validity
/// range (the hyperfine gap never closes below 10 T-scale fields).
pub fn eigensystem(b: f64, constants: &PhysicalConstants) -> Result<Eigensystem, MwError> {
    let h = hamiltonian(b, constants)?;
    let ms2_of = |idx: usize| if idx / 4 == 0 { -1i32 } else { 1 };
    let mi2_of = |idx: usize| 2 * (idx % 4) as i32 - 3;
    let mut levels = Vec::with_capacity(8);
    for mf2 in [-4i32, -2, 0, 2, 4] {
        let members: Vec<usize> = (0..8).filter(|&i| ms2_of(i) + mi2_of(i) == mf2).collect();
        let n = members.len();
        let mut block = DMatrix::zeros(n, n);
        for (r, &i) in members.iter().enumerate() {
            for (c, &j) in members.iter().enumerate() {
                block[(r, c)] = h[(i, j)];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(block);
        // sort block eigenpairs ascending; the top one is F = 2
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for (rank, &k) in order.iter().enumerate() {
            let f = if rank + 1 == n { 2 } else { 1 };
            let mut vector = V8::zeros();
            for (r, &i) in members.iter().enumerate() {
                vector[i] = eig.eigenvectors[(r, k)];
            }
            let (amax_idx, _) = vector
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            if vector[amax_idx] < 0.0 {
                vector = -vector;
            }
            levels.push(Level {
                state: HyperfineState::new(f, mf2 / 2)?,
                energy_hz: eig.eigenvalues[k],
                vector,
            });
        }
    }
    Ok(Eigensystem { levels, field_t: b })
}

/// How the microwave drive frequency is specified.
#[derive(Debug, Clone, Copy)]
pub enum DriveSpec {
    /// Absolute frequency, Hz.
    Frequency(f64),
    /// Offset from a named transition evaluated at a reference static field
    /// (typically the trap-center field).
    Detuned {
        lower: HyperfineState,
        upper: HyperfineState,
        offset_hz: f64,
        reference_field_t: f64,
    },
}

/// Microwave-frequency currents on chip wires.
///
/// Segment currents are **amplitudes** (peak, in A); configuration inputs
/// quoted peak-to-peak are halved on the way in.
#[derive(Debug, Clone)]
pub struct MwSource {
    pub segments: Vec<WireSegment>,
    pub drive: DriveSpec,
}

/// Quasi-static microwave field amplitude at one point.
#[derive(Debug, Clone, Copy)]
pub struct MwAmplitude {
    /// Real vector amplitude (single-phase source), T.
    pub b: Vec3,
    /// False when the point lies beyond λ/20 from the nearest source wire.
    pub near_field_ok: bool,
}

impl MwSource {
    /// Convert a peak-to-peak current (e.g. "20 mApp") to the amplitude
    /// convention used by `segments`.
    pub fn amplitude_from_peak_to_peak(i_pp: f64) -> f64 {
        0.5 * i_pp
    }

    /// Resolve the drive to an absolute frequency in Hz.
    pub fn drive_frequency(&self, constants: &PhysicalConstants) -> Result<f64, MwError> {
        let f = match self.drive {
            DriveSpec::Frequency(f) => f,
            DriveSpec::Detuned {
                lower,
                upper,
                offset_hz,
                reference_field_t,
            } => {
                if lower.f_quantum() == upper.f_quantum() {
                    return Err(MwError::SameManifold(lower, upper));
                }
                let eig = eigensystem(reference_field_t, constants)?;
                eig.transition(lower, upper) + offset_hz
            }
        };
        if !(f > 0.0) {
            return Err(MwError::BadDriveFrequency(f));
        }
        Ok(f)
    }

    /// Field amplitude at `point` by the quasi-static rule, with a validity
    /// flag against the near-field radius for the given drive frequency.
    pub fn field_amplitude(
        &self,
        point: &Vec3,
        constants: &PhysicalConstants,
    ) -> Result<MwAmplitude, MwError> {
        if self.segments.is_empty() || self.segments.iter().all(|s| s.current == 0.0) {
            return Err(MwError::ZeroAmplitude);
        }
        let drive = self.drive_frequency(constants)?;
        let mut b = Vec3::zeros();
        let mut nearest = f64::INFINITY;
        for (i, seg) in self.segments.iter().enumerate() {
            b += seg.field(point, constants.vacuum_permeability, i)?;
            nearest = nearest.min(seg.distance_to(point));
        }
        let lambda = SPEED_OF_LIGHT / drive;
        Ok(MwAmplitude {
            b,
            near_field_ok: nearest <= NEAR_FIELD_FRACTION * lambda,
        })
    }
}

/// Decomposition of a field amplitude into π and σ± components about the
/// static-field quantization axis.
#[derive(Debug, Clone)]
pub struct Polarization {
    pub pi: C64,
    pub sigma_plus: C64,
    pub sigma_minus: C64,
    /// Quantization axis (unit).
    pub axis: Vec3,
    /// Transverse orthonormal pair completing the frame.
    pub e1: Vec3,
    pub e2: Vec3,
}

impl Polarization {
    /// |π|² + |σ⁺|² + |σ⁻|², which equals |b_mw|².
    pub fn norm_squared(&self) -> f64 {
        self.pi.norm_sqr() + self.sigma_plus.norm_sqr() + self.sigma_minus.norm_sqr()
    }

    /// Cartesian components (along e1, e2, axis) reconstructed from the
    /// spherical amplitudes.
    fn cartesian(&self) -> (C64, C64, C64) {
        let rt2 = std::f64::consts::SQRT_2;
        let b1 = (self.sigma_plus + self.sigma_minus) / rt2;
        let b2 = C64::new(0.0, 1.0) * (self.sigma_plus - self.sigma_minus) / rt2;
        (b1, b2, self.pi)
    }
}

/// Split a (real) microwave amplitude vector into (π, σ⁺, σ⁻) about the
/// static field direction.
pub fn polarization_components(b_mw: &Vec3, static_dir: &Vec3) -> Result<Polarization, MwError> {
    let n = static_dir.norm();
    if n < 1e-12 {
        return Err(MwError::ZeroStaticField(n));
    }
    let axis = static_dir / n;
    let seed = if axis.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let e1 = seed.cross(&axis).normalize();
    let e2 = axis.cross(&e1);
    let b1 = b_mw.dot(&e1);
    let b2 = b_mw.dot(&e2);
    let rt2 = std::f64::consts::SQRT_2;
    Ok(Polarization {
        pi: C64::new(b_mw.dot(&axis), 0.0),
        sigma_plus: C64::new(b1, -b2) / rt2,
        sigma_minus: C64::new(b1, b2) / rt2,
        axis,
        e1,
        e2,
    })
}

/// On-resonance Rabi frequency Ω/2π (Hz) for the magnetic-dipole transition
/// between two labeled states, driven by the given polarization amplitudes.
///
/// ħΩ = |⟨f| μ_B (g_S S + g_I I) · b_mw |i⟩| with field-dependent matrix
/// elements from `eigensystem`; Δm ≠ 0, ±1 couplings vanish identically.
pub fn transition_rabi(
    eigen: &Eigensystem,
    a: HyperfineState,
    b: HyperfineState,
    pol: &Polarization,
    constants: &PhysicalConstants,
) -> Result<f64, MwError> {
    if a.f_quantum() == b.f_quantum() {
        return Err(MwError::SameManifold(a, b));
    }
    let (va, vb) = (&eigen.level(a).vector, &eigen.level(b).vector);
    let ops = SpinOperators::new();
    let el = |op: &M8| -> f64 { (vb.transpose() * op * va)[(0, 0)] };
    let (b1, b2, bz) = pol.cartesian();
    let bp = b1 - C64::new(0.0, 1.0) * b2; // couples via S+, I+
    let bm = b1 + C64::new(0.0, 1.0) * b2; // couples via S-, I-
    let couple = |z: &M8, p: &M8, m: &M8| -> C64 { bz * el(z) + (bp * el(p) + bm * el(m)) * 0.5 };
    let me = couple(&ops.sz, &ops.sp, &ops.sm) * constants.electron_g_factor
        + couple(&ops.iz, &ops.ip, &ops.im) * constants.nuclear_g_factor;
    Ok(me.norm() * constants.bohr_magneton / constants.planck)
}

/// A partner transition whose detuning is uncomfortably small for the
/// perturbative shift formula (|Δ|/Ω < 5).
#[derive(Debug, Clone)]
pub struct CouplingWarning {
    pub lower: HyperfineState,
    pub upper: HyperfineState,
    pub detuning_over_rabi: f64,
}

/// AC Zeeman shift of one state, with diagnostics.
#[derive(Debug, Clone)]
pub struct ShiftReport {
    /// U/h in Hz.
    pub shift_hz: f64,
    pub near_field_ok: bool,
    pub warnings: Vec<CouplingWarning>,
}

/// Couplings weaker than this (Hz) are dropped from the shift sum, so
/// strictly forbidden partners cannot raise spurious resonance errors.
const NEGLIGIBLE_RABI_HZ: f64 = 1e-6;

/// Perturbative AC Zeeman shift of `state` for a microwave amplitude vector
/// `b_mw` in a static field `b_static`, at drive frequency `drive_hz`.
///
/// U/h = Σ over coupled partners of ±Ω_t²/(4Δ_t), Δ_t = ν_drive − ν_t at
/// the local static field; the lower member of each pair takes +, the upper
/// −, so levels repel. Near-resonant partners (|Δ_t| < Ω_t) are a hard
/// error; 1 ≤ |Δ_t|/Ω_t < 5 only warns.
pub fn ac_zeeman_shift_at(
    state: HyperfineState,
    b_static: &Vec3,
    b_mw: &Vec3,
    drive_hz: f64,
    constants: &PhysicalConstants,
) -> Result<ShiftReport, MwError> {
    if !(drive_hz > 0.0) {
        return Err(MwError::BadDriveFrequency(drive_hz));
    }
    let b_mag = b_static.norm();
    if b_mag < 1e-12 {
        return Err(MwError::ZeroStaticField(b_mag));
    }
    let eigen = eigensystem(b_mag, constants)?;
    let pol = polarization_components(b_mw, b_static)?;
    let mut shift = 0.0;
    let mut warnings = Vec::new();
    for partner in HyperfineState::all() {
        if partner.f_quantum() == state.f_quantum() {
            continue;
        }
        if (partner.mf_quantum() - state.mf_quantum()).abs() > 1 {
            continue;
        }
        let rabi = transition_rabi(&eigen, state, partner, &pol, constants)?;
        if rabi < NEGLIGIBLE_RABI_HZ {
            continue;
        }
        let (lower, upper) = if state.f_quantum() == 1 {
            (state, partner)
        } else {
            (partner, state)
        };
        let nu_t = eigen.transition(lower, upper);
        let delta = drive_hz - nu_t;
        if delta.abs() < rabi {
            return Err(MwError::NearResonant {
                lower,
                upper,
                detuning_hz: delta,
                rabi_hz: rabi,
            });
        }
        let ratio = delta.abs() / rabi;
        if ratio < 5.0 {
            warnings.push(CouplingWarning {
                lower,
                upper,
                detuning_over_rabi: ratio,
            });
        }
        let sign = if state == lower { 1.0 } else { -1.0 };
        shift += sign * rabi * rabi / (4.0 * delta);
    }
    Ok(ShiftReport {
        shift_hz: shift,
        near_field_ok: true,
        warnings,
    })
}

/// AC Zeeman shift at a point of a chip layout: static field from the
/// layout, microwave amplitude from the source.
pub fn ac_zeeman_shift(
    state: HyperfineState,
    source: &MwSource,
    point: &Vec3,
    layout: &crate::fieldmap::ChipLayout,
) -> Result<ShiftReport, MwError> {
    let constants = &layout.constants;
    let sample = layout.total_field(point)?;
    let amp = source.field_amplitude(point, constants)?;
    let drive = source.drive_frequency(constants)?;
    let mut report = ac_zeeman_shift_at(state, &sample.b, &amp.b, drive, constants)?;
    report.near_field_ok = amp.near_field_ok;
    Ok(report)
}

/// Step for the dressed-moment finite difference: 1 mG.
pub const MOMENT_STEP_T: f64 = 1e-7;

/// Change of the effective static magnetic moment from microwave dressing,
/// in units of μ_B: Δμ = −h·dU/dB with the drive frequency held fixed while
/// the static field magnitude is stepped by ±0.5 mG.
pub fn dressed_moment_perturbation(
    state: HyperfineState,
    source: &MwSource,
    point: &Vec3,
    layout: &crate::fieldmap::ChipLayout,
) -> Result<f64, MwError> {
    let constants = &layout.constants;
    let sample = layout.total_field(point)?;
    let amp = source.field_amplitude(point, constants)?;
    let drive = source.drive_frequency(constants)?;
    let b_mag = sample.b.norm();
    if b_mag < 1e-12 {
        return Err(MwError::ZeroStaticField(b_mag));
    }
    let dir = sample.b / b_mag;
    let h = 0.5 * MOMENT_STEP_T;
    let up = ac_zeeman_shift_at(state, &(dir * (b_mag + h)), &amp.b, drive, constants)?;
    let dn = ac_zeeman_shift_at(state, &(dir * (b_mag - h)), &amp.b, drive, constants)?;
    let du_db = (up.shift_hz - dn.shift_hz) / MOMENT_STEP_T;
    Ok(-constants.planck * du_db / constants.bohr_magneton)
}

/// One resolved grid point of an AC Zeeman potential map.
#[derive(Debug, Clone)]
pub struct MapPoint {
    pub position: Vec3,
    /// U/h for |0⟩, Hz.
    pub shift0_hz: f64,
    /// U/h for |1⟩, Hz.
    pub shift1_hz: f64,
    /// shift(|1⟩) − shift(|0⟩), Hz.
    pub differential_hz: f64,
    /// |π|²/|b|², |σ⁺|²/|b|², |σ⁻|²/|b|².
    pub polarization_fractions: [f64; 3],
    /// Static Zeeman splitting between adjacent F=2 sublevels, Hz.
    pub zeeman_splitting_hz: f64,
    /// Splitting below the two-photon-suppression threshold.
    pub small_splitting: bool,
    pub near_field_ok: bool,
}

/// State-dependent potential landscape over a grid, with per-point error
/// masking.
#[derive(Debug)]
pub struct AcZeemanMap {
    /// One entry per requested grid point; `None` where evaluation failed.
    pub points: Vec<Option<MapPoint>>,
    pub errors: Vec<(usize, MwError)>,
}

/// Evaluate the clock pair's AC Zeeman shifts over a grid of positions.
///
/// `splitting_threshold_hz` flags points where the static Zeeman splitting
/// is too small to suppress polarization-impurity two-photon transitions.
pub fn potential_map(
    source: &MwSource,
    layout: &crate::fieldmap::ChipLayout,
    grid: &[Vec3],
    splitting_threshold_hz: f64,
) -> Result<AcZeemanMap, MwError> {
    let constants = &layout.constants;
    let drive = source.drive_frequency(constants)?;
    let s0 = HyperfineState::clock_0();
    let s1 = HyperfineState::clock_1();
    let mut map = AcZeemanMap {
        points: Vec::with_capacity(grid.len()),
        errors: Vec::new(),
    };
    for (i, point) in grid.iter().enumerate() {
        let result = (|| -> Result<MapPoint, MwError> {
            let sample = layout.total_field(point)?;
            let amp = source.field_amplitude(point, constants)?;
            let pol = polarization_components(&amp.b, &sample.b)?;
            let r0 = ac_zeeman_shift_at(s0, &sample.b, &amp.b, drive, constants)?;
            let r1 = ac_zeeman_shift_at(s1, &sample.b, &amp.b, drive, constants)?;
            let eigen = eigensystem(sample.b.norm(), constants)?;
            let splitting = (eigen.energy(HyperfineState::new(2, 1)?)
                - eigen.energy(HyperfineState::new(2, 0)?))
            .abs();
            let nsq = pol.norm_squared().max(1e-300);
            Ok(MapPoint {
                position: *point,
                shift0_hz: r0.shift_hz,
                shift1_hz: r1.shift_hz,
                differential_hz: r1.shift_hz - r0.shift_hz,
                polarization_fractions: [
                    pol.pi.norm_sqr() / nsq,
                    pol.sigma_plus.norm_sqr() / nsq,
                    pol.sigma_minus.norm_sqr() / nsq,
                ],
                zeeman_splitting_hz: splitting,
                small_splitting: splitting < splitting_threshold_hz,
                near_field_ok: amp.near_field_ok,
            })
        })();
        match result {
            Ok(p) => map.points.push(Some(p)),
            Err(e) => {
                map.points.push(None);
                map.errors.push((i, e));
            }
        }
    }
    Ok(map)
}

/// Exact light-shift of the lower/upper member of an isolated driven pair,
/// from 2×2 dressed-state diagonalization: ±(√(Δ²+Ω²) − |Δ|)/2 with the
/// sign arranged so levels repel. Oracle for the perturbative formula.
pub fn dressed_pair_shift(rabi_hz: f64, detuning_hz: f64, lower_member: bool) -> f64 {
    let mag = 0.5 * ((detuning_hz * detuning_hz + rabi_hz * rabi_hz).sqrt() - detuning_hz.abs());
    let sign = detuning_hz.signum() * if lower_member { 1.0 } else { -1.0 };
    sign * mag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldmap::ChipLayout;
    use crate::hyperfine::BreitRabiModel;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::rb87()
    }

    const GAUSS: f64 = 1e-4;

    #[test]
    fn hamiltonian_is_symmetric() {
        let h = hamiltonian(3.0 * GAUSS, &consts()).unwrap();
        let asym = (h - h.transpose()).amax();
        assert!(asym <= 1e-14 * h.amax());
    }

    #[test]
    fn zero_field_degeneracies() {
        let c = consts();
        let eig = eigensystem(0.0, &c).unwrap();
        let nu = c.hyperfine_splitting;
        let mut lower = 0;
        let mut upper = 0;
        for l in &eig.levels {
            if (l.energy_hz - 0.375 * nu).abs() < 1e-3 {
                upper += 1;
                assert_eq!(l.state.f_quantum(), 2);
            } else if (l.energy_hz + 0.625 * nu).abs() < 1e-3 {
                lower += 1;
                assert_eq!(l.state.f_quantum(), 1);
            } else {
                panic!("level at {} Hz matches neither manifold", l.energy_hz);
            }
        }
        assert_eq!((lower, upper), (3, 5));
    }

    #[test]
    fn matrix_energies_match_closed_form() {
        let c = consts();
        let model = BreitRabiModel::new(c.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let b = rng.random::<f64>() * 10.0 * GAUSS;
            let eig = eigensystem(b, &c).unwrap();
            for state in HyperfineState::all() {
                let exact = model.state_energy(state, b).unwrap();
                let matrix = eig.energy(state);
                assert_relative_eq!(matrix, exact, max_relative = 1e-12, epsilon = 1e-2);
            }
        }
    }

    #[test]
    fn clock_pair_slopes_equal_at_magic_field() {
        let c = consts();
        let model = BreitRabiModel::new(c.clone());
        let b0 = model.magic_field().unwrap();
        let h = 1e-7;
        let slope = |s: HyperfineState| {
            let up = eigensystem(b0 + h, &c).unwrap().energy(s);
            let dn = eigensystem(b0 - h, &c).unwrap().energy(s);
            (up - dn) / (2.0 * h)
        };
        let s0 = slope(HyperfineState::clock_0());
        let s1 = slope(HyperfineState::clock_1());
        assert_relative_eq!(s0, s1, max_relative = 1e-3);
    }

    fn straight_wire_source(amplitude: f64, drive: DriveSpec) -> MwSource {
        MwSource {
            segments: vec![WireSegment::new(
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                amplitude,
            )
            .unwrap()],
            drive,
        }
    }

    #[test]
    fn wire_amplitude_matches_infinite_wire() {
        let c = consts();
        // 20 mA peak-to-peak -> 10 mA amplitude, 10 um away -> 2.0 G
        let amp = MwSource::amplitude_from_peak_to_peak(0.020);
        let src = straight_wire_source(amp, DriveSpec::Frequency(6.8e9));
        let b = src
            .field_amplitude(&Vec3::new(0.0, 0.0, 10e-6), &c)
            .unwrap();
        assert!(b.near_field_ok);
        assert_relative_eq!(b.b.norm(), 2.0 * GAUSS, max_relative = 1e-6);
        // linear in current
        let src2 = straight_wire_source(2.0 * amp, DriveSpec::Frequency(6.8e9));
        let b2 = src2
            .field_amplitude(&Vec3::new(0.0, 0.0, 10e-6), &c)
            .unwrap();
        assert_relative_eq!(b2.b.norm(), 2.0 * b.b.norm(), max_relative = 1e-12);
    }

    #[test]
    fn far_point_flagged_outside_near_field() {
        let c = consts();
        let src = straight_wire_source(0.01, DriveSpec::Frequency(6.834e9));
        // lambda ~ 4.4 cm, lambda/20 ~ 2.2 mm; 1 cm is beyond it
        let far = src.field_amplitude(&Vec3::new(0.0, 0.0, 1e-2), &c).unwrap();
        assert!(!far.near_field_ok);
    }

    #[test]
    fn polarization_parallel_is_pure_pi() {
        let b = Vec3::new(0.0, 3.0 * GAUSS, 0.0);
        let p = polarization_components(&b, &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(p.pi.norm(), 3.0 * GAUSS, max_relative = 1e-12);
        assert!(p.sigma_plus.norm() < 1e-18 && p.sigma_minus.norm() < 1e-18);
    }

    #[test]
    fn polarization_transverse_linear_splits_equally() {
        let b = Vec3::new(2.0 * GAUSS, 0.0, 0.0);
        let p = polarization_components(&b, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(p.pi.norm() < 1e-18);
        assert_relative_eq!(
            p.sigma_plus.norm(),
            2.0 * GAUSS / 2f64.sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            p.sigma_minus.norm(),
            p.sigma_plus.norm(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn polarization_norm_preserved_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let b = Vec3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let d = Vec3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            if d.norm() < 1e-3 {
                continue;
            }
            let p = polarization_components(&b, &d).unwrap();
            assert_relative_eq!(p.norm_squared(), b.norm_squared(), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_static_direction_rejected() {
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert!(matches!(
            polarization_components(&b, &Vec3::zeros()),
            Err(MwError::ZeroStaticField(_))
        ));
    }

    #[test]
    fn pi_rabi_reduces_to_clebsch_gordan() {
        let c = consts();
        let eig = eigensystem(1e-8, &c).unwrap();
        let b_mw = Vec3::new(0.0, 0.0, 2.0 * GAUSS);
        let pol = polarization_components(&b_mw, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let rabi = transition_rabi(
            &eig,
            HyperfineState::new(1, -1).unwrap(),
            HyperfineState::new(2, -1).unwrap(),
            &pol,
            &c,
        )
        .unwrap();
        // pure electron-spin pi element at B->0 is sqrt(3)/4; the nuclear
        // term adds a per-mille correction
        let electron_only =
            c.electron_g_factor * (3f64.sqrt() / 4.0) * c.bohr_magneton * 2.0 * GAUSS / c.planck;
        assert_relative_eq!(rabi, electron_only, max_relative = 2e-3);
        assert_relative_eq!(rabi, 2.42e6, max_relative = 0.01);
        // and the electron matrix element alone reduces to CG exactly
        let v1 = &eig.level(HyperfineState::new(1, -1).unwrap()).vector;
        let v2 = &eig.level(HyperfineState::new(2, -1).unwrap()).vector;
        let ops = SpinOperators::new();
        let el = (v2.transpose() * ops.sz * v1)[(0, 0)];
        assert_relative_eq!(el.abs(), 3f64.sqrt() / 4.0, max_relative = 1e-6);
    }

    #[test]
    fn partner_transitions_have_equal_rabi() {
        let c = consts();
        let eig = eigensystem(1e-8, &c).unwrap();
        let b_mw = Vec3::new(0.0, 0.0, 2.0 * GAUSS);
        let pol = polarization_components(&b_mw, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let r1 = transition_rabi(
            &eig,
            HyperfineState::new(1, -1).unwrap(),
            HyperfineState::new(2, -1).unwrap(),
            &pol,
            &c,
        )
        .unwrap();
        let r2 = transition_rabi(
            &eig,
            HyperfineState::new(1, 1).unwrap(),
            HyperfineState::new(2, 1).unwrap(),
            &pol,
            &c,
        )
        .unwrap();
        assert_relative_eq!(r1, r2, max_relative = 1e-6);
    }

    #[test]
    fn pi_drive_does_not_couple_sigma_transitions() {
        let c = consts();
        let eig = eigensystem(1e-8, &c).unwrap();
        let b_mw = Vec3::new(0.0, 0.0, 2.0 * GAUSS);
        let pol = polarization_components(&b_mw, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let r = transition_rabi(
            &eig,
            HyperfineState::new(1, -1).unwrap(),
            HyperfineState::new(2, 0).unwrap(),
            &pol,
            &c,
        )
        .unwrap();
        assert!(r < 1e-9, "sigma transition driven by pure pi: {r}");
    }

    #[test]
    fn same_manifold_rejected() {
        let c = consts();
        let eig = eigensystem(1e-6, &c).unwrap();
        let pol = polarization_components(&Vec3::new(0.0, 0.0, GAUSS), &Vec3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert!(matches!(
            transition_rabi(
                &eig,
                HyperfineState::new(2, 0).unwrap(),
                HyperfineState::new(2, 1).unwrap(),
                &pol,
                &c
            ),
            Err(MwError::SameManifold(_, _))
        ));
    }

    #[test]
    fn sum_rule_invariant_under_basis_rotation() {
        let c = consts();
        let eig = eigensystem(0.5 * GAUSS, &c).unwrap();
        let i_state = HyperfineState::new(1, -1).unwrap();
        let vi = &eig.level(i_state).vector;
        let ops = SpinOperators::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let total_for = |triad: &[Vec3; 3]| -> f64 {
            let mut total = 0.0;
            for f_state in HyperfineState::all() {
                if f_state.f_quantum() != 2 {
                    continue;
                }
                let vf = &eig.level(f_state).vector;
                for e in triad {
                    // <f| S.e |i> with S.e = e_z Sz + e_x Sx + e_y Sy
                    let el = |op: &M8| (vf.transpose() * op * vi)[(0, 0)];
                    let sx = 0.5 * (el(&ops.sp) + el(&ops.sm));
                    let sy = 0.5 * (el(&ops.sp) - el(&ops.sm)); // imaginary part coefficient
                    let sz = el(&ops.sz);
                    let re = e.x * sx + e.z * sz;
                    let im = e.y * sy;
                    total += re * re + im * im;
                }
            }
            total
        };
        let random_triad = |rng: &mut ChaCha8Rng| -> [Vec3; 3] {
            let v1 = Vec3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            )
            .normalize();
            let mut v2 = Vec3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            v2 = (v2 - v1 * v1.dot(&v2)).normalize();
            [v1, v2, v1.cross(&v2)]
        };
        let base = total_for(&[Vec3::x(), Vec3::y(), Vec3::z()]);
        for _ in 0..10 {
            let t = random_triad(&mut rng);
            assert_relative_eq!(total_for(&t), base, max_relative = 1e-10);
        }
    }

    /// Small uniform static field + one microwave wire at 10 µm; the static
    /// field is weak enough that the two π-partner detunings are equal to a
    /// few per mille.
    fn paper_scenario(delta_hz: f64) -> (ChipLayout, MwSource, Vec3) {
        let b_static = 0.1 * GAUSS;
        let layout = ChipLayout::new(vec![], Vec3::new(0.0, b_static, 0.0), 0.0).unwrap();
        let point = Vec3::new(0.0, 0.0, 10e-6);
        // wire along x: field at the point is along y, parallel to the bias
        let source = MwSource {
            segments: vec![WireSegment::new(
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                MwSource::amplitude_from_peak_to_peak(0.020),
            )
            .unwrap()],
            drive: DriveSpec::Detuned {
                lower: HyperfineState::new(1, -1).unwrap(),
                upper: HyperfineState::new(2, -1).unwrap(),
                offset_hz: delta_hz,
                reference_field_t: b_static,
            },
        };
        (layout, source, point)
    }

    #[test]
    fn differential_shift_matches_quoted_value() {
        let (layout, source, point) = paper_scenario(50e6);
        let s0 = ac_zeeman_shift(HyperfineState::clock_0(), &source, &point, &layout).unwrap();
        let s1 = ac_zeeman_shift(HyperfineState::clock_1(), &source, &point, &layout).unwrap();
        let diff = s1.shift_hz - s0.shift_hz;
        // -(Omega^2/2Delta): |0> pushed up, |1> pushed down for Delta > 0
        assert_relative_eq!(diff.abs(), 57.6e3, max_relative = 0.05);
        assert!(s0.shift_hz > 0.0 && s1.shift_hz < 0.0);
        assert!(s0.warnings.is_empty());
    }

    #[test]
    fn detuning_sign_flip_flips_shift() {
        let (layout, source_up, point) = paper_scenario(50e6);
        let (_, source_dn, _) = paper_scenario(-50e6);
        let up = ac_zeeman_shift(HyperfineState::clock_0(), &source_up, &point, &layout)
            .unwrap()
            .shift_hz;
        let dn = ac_zeeman_shift(HyperfineState::clock_0(), &source_dn, &point, &layout)
            .unwrap()
            .shift_hz;
        assert_relative_eq!(up, -dn, max_relative = 0.05);
    }

    #[test]
    fn near_resonant_drive_is_hard_error() {
        let (layout, source, point) = paper_scenario(1e3); // 1 kHz << Omega
        assert!(matches!(
            ac_zeeman_shift(HyperfineState::clock_0(), &source, &point, &layout),
            Err(MwError::NearResonant { .. })
        ));
    }

    #[test]
    fn moderate_detuning_warns() {
        // Delta = 3 Omega: valid but degraded
        let (layout, source, point) = paper_scenario(3.0 * 2.42e6);
        let rep = ac_zeeman_shift(HyperfineState::clock_0(), &source, &point, &layout).unwrap();
        assert!(!rep.warnings.is_empty());
        assert!(rep.warnings[0].detuning_over_rabi < 5.0);
    }

    #[test]
    fn perturbative_matches_dressed_oracle() {
        let omega = 2.4e6;
        let delta = 50e6;
        let pert = omega * omega / (4.0 * delta);
        let exact = dressed_pair_shift(omega, delta, true);
        assert_relative_eq!(pert, exact, max_relative = 0.005);
        // and antisymmetry of the oracle
        assert_relative_eq!(
            dressed_pair_shift(omega, -delta, true),
            -exact,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            dressed_pair_shift(omega, delta, false),
            -exact,
            max_relative = 1e-12
        );
    }

    #[test]
    fn dressed_moment_in_expected_window() {
        let (layout, source, point) = paper_scenario(50e6);
        let dm0 = dressed_moment_perturbation(HyperfineState::clock_0(), &source, &point, &layout)
            .unwrap();
        let mag = dm0.abs();
        assert!(
            (3e-5..1e-3).contains(&mag),
            "dressed moment {mag} outside order-of-magnitude window"
        );
    }

    #[test]
    fn dressed_moment_scales_inverse_square_of_detuning() {
        let (layout, s1x, point) = paper_scenario(50e6);
        let (_, s2x, _) = paper_scenario(100e6);
        let m1 = dressed_moment_perturbation(HyperfineState::clock_0(), &s1x, &point, &layout)
            .unwrap()
            .abs();
        let m2 = dressed_moment_perturbation(HyperfineState::clock_0(), &s2x, &point, &layout)
            .unwrap()
            .abs();
        assert_relative_eq!(m1 / m2, 4.0, max_relative = 0.1);
    }

    #[test]
    fn map_point_matches_single_point_shift() {
        let (layout, source, point) = paper_scenario(50e6);
        let map = potential_map(&source, &layout, &[point], 1e6).unwrap();
        let mp = map.points[0].as_ref().unwrap();
        let s0 = ac_zeeman_shift(HyperfineState::clock_0(), &source, &point, &layout).unwrap();
        let s1 = ac_zeeman_shift(HyperfineState::clock_1(), &source, &point, &layout).unwrap();
        assert_relative_eq!(mp.shift0_hz, s0.shift_hz, max_relative = 1e-12);
        assert_relative_eq!(
            mp.differential_hz,
            s1.shift_hz - s0.shift_hz,
            max_relative = 1e-12
        );
        assert_relative_eq!(mp.polarization_fractions[0], 1.0, max_relative = 1e-9);
    }

    #[test]
    fn map_decays_as_inverse_square_of_distance() {
        let (layout, source, _) = paper_scenario(50e6);
        let grid: Vec<Vec3> = (0..8)
            .map(|k| Vec3::new(0.0, 0.0, 5e-6 * 2f64.powf(k as f64 / 3.0)))
            .collect();
        let map = potential_map(&source, &layout, &grid, 1e6).unwrap();
        let mut logs = Vec::new();
        for (g, p) in grid.iter().zip(&map.points) {
            let p = p.as_ref().unwrap();
            logs.push((g.z.ln(), p.differential_hz.abs().ln()));
        }
        let n = logs.len() as f64;
        let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
        let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
        let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|l| (l.0 - mx) * (l.0 - mx)).sum();
        let slope = sxy / sxx;
        assert_relative_eq!(slope, -2.0, max_relative = 0.05);
    }

    #[test]
    fn zero_static_grid_point_masked() {
        // bias tuned to cancel the dc wire's field exactly at the grid point
        let c = consts();
        let point = Vec3::new(0.0, 0.0, 10e-6);
        let seg =
            WireSegment::new(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 0.1).unwrap();
        let cancel = -seg.field(&point, c.vacuum_permeability, 0).unwrap();
        let layout = ChipLayout::new(vec![seg], cancel, 0.0).unwrap();
        let source = straight_wire_source(0.01, DriveSpec::Frequency(6.884e9));
        let map = potential_map(&source, &layout, &[point], 1e6).unwrap();
        assert!(map.points[0].is_none());
        assert_eq!(map.errors.len(), 1);
    }

    #[test]
    fn zero_amplitude_source_rejected() {
        let c = consts();
        let src = MwSource {
            segments: vec![],
            drive: DriveSpec::Frequency(6.8e9),
        };
        assert!(matches!(
            src.field_amplitude(&Vec3::new(0.0, 0.0, 1e-5), &c),
            Err(MwError::ZeroAmplitude)
        ));
    }

    #[test]
    fn small_zeeman_splitting_flagged() {
        // 0.05 G static field: splitting ~ 35 kHz, below a 1 MHz threshold
        let layout = ChipLayout::new(vec![], Vec3::new(0.0, 0.05 * GAUSS, 0.0), 0.0).unwrap();
        let source = MwSource {
            segments: vec![WireSegment::new(
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                0.010,
            )
            .unwrap()],
            drive: DriveSpec::Detuned {
                lower: HyperfineState::new(1, -1).unwrap(),
                upper: HyperfineState::new(2, -1).unwrap(),
                offset_hz: 50e6,
                reference_field_t: 0.05 * GAUSS,
            },
        };
        let map = potential_map(&source, &layout, &[Vec3::new(0.0, 0.0, 10e-6)], 1e6).unwrap();
        let p = map.points[0].as_ref().unwrap();
        assert!(p.small_splitting);
    }
}
