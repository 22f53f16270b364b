//! Static magnetic fields from chip-wire layouts plus homogeneous bias fields.
//!
//! Wires are ideal 1-D filaments evaluated with the finite-segment
//! Biot–Savart closed form. The field Jacobian is analytic; the Hessian of
//! |B| (what trap frequencies need) is a central finite difference of the
//! analytic gradient of |B| with a 10 nm step.

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::hyperfine::HyperfineState;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Minimum allowed distance from a field point to any wire segment (m).
pub const EXCLUSION_RADIUS: f64 = 0.1e-6;

/// Step for the finite-difference Hessian of |B| (m).
pub const HESSIAN_STEP: f64 = 10e-9;

const MAX_CURRENT: f64 = 100.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field point within {EXCLUSION_RADIUS} m of segment {segment_index} (distance {distance:.3e} m)")]
    SingularPoint { segment_index: usize, distance: f64 },
    #[error("degenerate segment: start equals end at {0:?}")]
    DegenerateSegment(Vec3),
    #[error("segment current {0} A exceeds the {MAX_CURRENT} A sanity bound")]
    CurrentOutOfRange(f64),
    #[error("layout has no segments and zero bias")]
    EmptyLayout,
    #[error("wire depth h_e = {0} m must be non-negative")]
    NegativeWireDepth(f64),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("layout file: {0}")]
    LayoutFile(String),
}

/// Straight current filament from `start` to `end` (current flows start→end).
#[derive(Debug, Clone, PartialEq)]
pub struct WireSegment {
    pub start: Vec3,
    pub end: Vec3,
    /// Signed current in A.
    pub current: f64,
}

impl WireSegment {
    pub fn new(start: Vec3, end: Vec3, current: f64) -> Result<Self, FieldError> {
        if !(start.iter().chain(end.iter()).all(|v| v.is_finite()) && current.is_finite()) {
            return Err(FieldError::NonFinite("wire segment"));
        }
        if start == end {
            return Err(FieldError::DegenerateSegment(start));
        }
        if current.abs() >= MAX_CURRENT {
            return Err(FieldError::CurrentOutOfRange(current));
        }
        Ok(Self {
            start,
            end,
            current,
        })
    }

    /// Distance from `point` to the segment (not the infinite line).
    pub fn distance_to(&self, point: &Vec3) -> f64 {
        let axis = self.end - self.start;
        let t = (point - self.start).dot(&axis) / axis.norm_squared();
        let closest = self.start + axis * t.clamp(0.0, 1.0);
        (point - closest).norm()
    }

    /// Biot–Savart field of the finite segment at `point` (T).
    ///
    /// Points on the extension of the segment line give exactly zero.
    pub fn field(&self, point: &Vec3, mu0: f64, index: usize) -> Result<Vec3, FieldError> {
        let dist = self.distance_to(point);
        if dist < EXCLUSION_RADIUS {
            return Err(FieldError::SingularPoint {
                segment_index: index,
                distance: dist,
            });
        }
        let u = (self.end - self.start).normalize();
        let d1 = point - self.start;
        let d2 = point - self.end;
        let w = u.cross(&d1);
        let c = w.norm_squared();
        if c < 1e-30 {
            // collinear with the segment line but outside the exclusion zone
            return Ok(Vec3::zeros());
        }
        let s1 = u.dot(&d1) / d1.norm();
        let s2 = u.dot(&d2) / d2.norm();
        Ok(w * (mu0 * self.current / (4.0 * std::f64::consts::PI) * (s1 - s2) / c))
    }

    /// Analytic Jacobian ∂B_i/∂x_j of the segment field at `point` (T/m).
    pub fn jacobian(&self, point: &Vec3, mu0: f64, index: usize) -> Result<Mat3, FieldError> {
        let dist = self.distance_to(point);
        if dist < EXCLUSION_RADIUS {
            return Err(FieldError::SingularPoint {
                segment_index: index,
                distance: dist,
            });
        }
        let u = (self.end - self.start).normalize();
        let d1 = point - self.start;
        let d2 = point - self.end;
        let w = u.cross(&d1);
        let c = w.norm_squared();
        if c < 1e-30 {
            return Ok(Mat3::zeros());
        }
        let k = mu0 * self.current / (4.0 * std::f64::consts::PI);
        let r1 = d1.norm();
        let r2 = d2.norm();
        let s1 = u.dot(&d1) / r1;
        let s2 = u.dot(&d2) / r2;
        let g = (s1 - s2) / c;
        // row gradients
        let grad_s1 = (u / r1 - d1 * (u.dot(&d1) / (r1 * r1 * r1))).transpose();
        let grad_s2 = (u / r2 - d2 * (u.dot(&d2) / (r2 * r2 * r2))).transpose();
        let skew_u = Mat3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0);
        let grad_c = (w.transpose() * skew_u) * 2.0;
        let grad_g = (grad_s1 - grad_s2) / c - grad_c * ((s1 - s2) / (c * c));
        Ok((w * grad_g + skew_u * g) * k)
    }
}

/// Field, gradient, and |B| curvature information at one point.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub b: Vec3,
    /// ∂B_i/∂x_j (T/m).
    pub jacobian: Mat3,
    /// ∂²|B|/∂x_j∂x_k (T/m²).
    pub hessian_of_magnitude: Mat3,
    pub magnitude: f64,
}

impl FieldSample {
    /// ∇|B| (T/m), from the analytic Jacobian.
    pub fn magnitude_gradient(&self) -> Vec3 {
        if self.magnitude == 0.0 {
            return Vec3::zeros();
        }
        self.jacobian.transpose() * (self.b / self.magnitude)
    }
}

/// Anything that produces a static magnetic field; chip layouts in the
/// artifact, closed-form fields in tests.
pub trait FieldSource {
    fn field(&self, point: &Vec3) -> Result<Vec3, FieldError>;
    fn jacobian(&self, point: &Vec3) -> Result<Mat3, FieldError>;

    fn magnitude_gradient(&self, point: &Vec3) -> Result<Vec3, FieldError> {
        let b = self.field(point)?;
        let n = b.norm();
        if n == 0.0 {
            return Ok(Vec3::zeros());
        }
        Ok(self.jacobian(point)?.transpose() * (b / n))
    }

    /// Hessian of |B| by central differences of the analytic ∇|B|.
    fn magnitude_hessian(&self, point: &Vec3) -> Result<Mat3, FieldError> {
        let h = HESSIAN_STEP;
        let mut m = Mat3::zeros();
        for k in 0..3 {
            let mut dp = Vec3::zeros();
            dp[k] = h;
            let gp = self.magnitude_gradient(&(point + dp))?;
            let gm = self.magnitude_gradient(&(point - dp))?;
            let col = (gp - gm) / (2.0 * h);
            for j in 0..3 {
                m[(j, k)] = col[j];
            }
        }
        // symmetrize; the FD asymmetry is pure truncation noise
        Ok((m + m.transpose()) * 0.5)
    }

    fn sample(&self, point: &Vec3) -> Result<FieldSample, FieldError> {
        let b = self.field(point)?;
        Ok(FieldSample {
            b,
            jacobian: self.jacobian(point)?,
            hessian_of_magnitude: self.magnitude_hessian(point)?,
            magnitude: b.norm(),
        })
    }
}

/// Chip-wire layout: DC filaments, homogeneous bias, and the surface-plane
/// bookkeeping (atom–surface distance d versus atom–wire distance d_w = d + h_e).
#[derive(Debug, Clone)]
pub struct ChipLayout {
    pub segments: Vec<WireSegment>,
    /// Homogeneous bias field (T).
    pub bias: Vec3,
    /// Position of the chip surface along the outward normal (m).
    pub surface_height: f64,
    /// Outward surface normal (unit vector; atoms live on the positive side).
    pub surface_normal: Vec3,
    /// Depth of the current-carrying wires below the surface (m).
    pub wire_depth: f64,
    /// Direction of gravitational acceleration (unit vector, default −z).
    pub gravity_direction: Vec3,
    pub constants: PhysicalConstants,
}

impl ChipLayout {
    pub fn new(
        segments: Vec<WireSegment>,
        bias: Vec3,
        wire_depth: f64,
    ) -> Result<Self, FieldError> {
        if segments.is_empty() && bias == Vec3::zeros() {
            return Err(FieldError::EmptyLayout);
        }
        if wire_depth < 0.0 {
            return Err(FieldError::NegativeWireDepth(wire_depth));
        }
        Ok(Self {
            segments,
            bias,
            surface_height: 0.0,
            surface_normal: Vec3::z(),
            wire_depth,
            gravity_direction: -Vec3::z(),
            constants: PhysicalConstants::rb87(),
        })
    }

    /// Atom–surface distance d of a point, measured along the outward normal.
    pub fn surface_distance(&self, point: &Vec3) -> f64 {
        self.surface_normal.dot(point) - self.surface_height
    }

    /// Atom–wire distance d_w = d + h_e.
    pub fn wire_distance(&self, point: &Vec3) -> f64 {
        self.surface_distance(point) + self.wire_depth
    }

    /// Full field sample including the |B| Hessian.
    pub fn total_field(&self, point: &Vec3) -> Result<FieldSample, FieldError> {
        self.sample(point)
    }

    /// Trapping potential U/h in Hz for a hyperfine state, with the linear
    /// Zeeman coefficient m_F g_F fixed at ±1/2 so the clock pair sees an
    /// identical potential. Returns (U/h, trappable flag).
    pub fn trapping_potential(
        &self,
        point: &Vec3,
        state: HyperfineState,
        gravity_on: bool,
    ) -> Result<(f64, bool), FieldError> {
        let b = self.field(point)?.norm();
        let c = &self.constants;
        let mut u = state.mf_gf() * c.bohr_magneton * b / c.planck;
        if gravity_on {
            // height measured against the gravity direction
            u += -c.rb87_mass * c.gravity * self.gravity_direction.dot(point) / c.planck;
        }
        Ok((u, state.is_trappable()))
    }

    /// Load a layout from the documented structured-text schema
    /// (lengths in µm, currents in mA, fields in G).
    pub fn from_toml_str(text: &str) -> Result<Self, FieldError> {
        let file: LayoutFile =
            toml::from_str(text).map_err(|e| FieldError::LayoutFile(e.to_string()))?;
        file.build()
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FieldError::LayoutFile(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

impl FieldSource for ChipLayout {
    fn field(&self, point: &Vec3) -> Result<Vec3, FieldError> {
        let mut b = self.bias;
        for (i, seg) in self.segments.iter().enumerate() {
            b += seg.field(point, self.constants.vacuum_permeability, i)?;
        }
        Ok(b)
    }

    fn jacobian(&self, point: &Vec3) -> Result<Mat3, FieldError> {
        let mut j = Mat3::zeros();
        for (i, seg) in self.segments.iter().enumerate() {
            j += seg.jacobian(point, self.constants.vacuum_permeability, i)?;
        }
        Ok(j)
    }
}

// ---------------------------------------------------------------------------
// Layout file schema (config boundary: µm, mA, G)

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    /// Wire depth below the surface, µm.
    h_e_um: f64,
    /// Surface position along the outward normal, µm.
    #[serde(default)]
    surface_height_um: f64,
    /// Outward surface normal (need not be normalized).
    #[serde(default = "default_normal")]
    normal: [f64; 3],
    /// Bias field in G.
    bias_g: [f64; 3],
    #[serde(default = "default_gravity")]
    gravity_direction: [f64; 3],
    #[serde(default, rename = "segment")]
    segments: Vec<SegmentEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentEntry {
    #[serde(default)]
    #[allow(dead_code)]
    name: String,
    start_um: [f64; 3],
    end_um: [f64; 3],
    current_ma: f64,
}

fn default_normal() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -1.0]
}

const UM: f64 = 1e-6;
const GAUSS: f64 = 1e-4;
const MILLIAMP: f64 = 1e-3;

impl LayoutFile {
    fn build(self) -> Result<ChipLayout, FieldError> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                WireSegment::new(
                    Vec3::from(s.start_um.map(|v| v * UM)),
                    Vec3::from(s.end_um.map(|v| v * UM)),
                    s.current_ma * MILLIAMP,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bias = Vec3::from(self.bias_g.map(|v| v * GAUSS));
        let mut layout = ChipLayout::new(segments, bias, self.h_e_um * UM)?;
        layout.surface_height = self.surface_height_um * UM;
        let n = Vec3::from(self.normal);
        if n.norm() == 0.0 {
            return Err(FieldError::LayoutFile("zero surface normal".into()));
        }
        layout.surface_normal = n.normalize();
        let g = Vec3::from(self.gravity_direction);
        if g.norm() == 0.0 {
            return Err(FieldError::LayoutFile("zero gravity direction".into()));
        }
        layout.gravity_direction = g.normalize();
        Ok(layout)
    }
}
