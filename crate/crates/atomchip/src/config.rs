//! Scenario configuration: the structured-text schema consumed by the
//! command-line front end.
//!
//! A scenario file is a TOML document with a `scenario` name, an optional
//! `seed`, and one section per subcommand it supports (`[trap]`,
//! `[calibrate]`, `[field]`, `[ensemble]`, `[ramsey]`, `[clock]`, `[allan]`,
//! `[mw]`). Quantities carry their unit in the field name (`_um`, `_g`,
//! `_uk`, `_ma`, `_s`, `_hz`) and are converted to SI here; unknown fields
//! are rejected with the offending name in the error message. Referenced
//! files are checked for existence at load time.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::clock::NoiseBudget;
use crate::coherence::{DecayModel, PulseModel, Scan};
use crate::hyperfine::HyperfineState;
use nalgebra::Vector3;

const UM: f64 = 1e-6;
const GAUSS: f64 = 1e-4;
const MILLIGAUSS: f64 = 1e-7;
const MICROKELVIN: f64 = 1e-6;
const MILLIAMP: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("scenario {scenario:?} has no [{section}] section")]
    MissingSection {
        scenario: String,
        section: &'static str,
    },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("field {field}: {reason}")]
    BadValue { field: &'static str, reason: String },
}

fn bad(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        field,
        reason: reason.into(),
    }
}

/// A parsed scenario file plus the context needed to run it: the directory
/// paths resolve against and the hash of the raw bytes for output headers.
#[derive(Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// Directory of the scenario file; relative layout paths resolve here.
    pub base_dir: PathBuf,
    /// SHA-256 of the raw file contents, lowercase hex.
    pub config_hash: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: String,
    /// Default RNG seed; the command line can override it.
    pub seed: Option<u64>,
    pub field: Option<FieldSection>,
    pub trap: Option<TrapSection>,
    pub calibrate: Option<CalibrateSection>,
    pub ensemble: Option<EnsembleSection>,
    pub ramsey: Option<RamseySection>,
    pub clock: Option<ClockSection>,
    pub allan: Option<AllanSection>,
    pub mw: Option<MwSection>,
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError::Io {
            path: path.to_owned(),
            source: e,
        })?;
        let text = String::from_utf8_lossy(&bytes);
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let base_dir = path
            .parent()
            .map(Path::to_owned)
            .unwrap_or_else(|| PathBuf::from("."));
        let scenario = Scenario {
            file,
            base_dir,
            config_hash: hex_digest(&bytes),
        };
        scenario.validate_files()?;
        Ok(scenario)
    }

    /// Resolve a path from the scenario file against its directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate_files(&self) -> Result<(), ConfigError> {
        let layouts = [
            self.file.field.as_ref().map(|s| &s.layout),
            self.file.trap.as_ref().map(|s| &s.layout),
            self.file.calibrate.as_ref().map(|s| &s.layout),
            self.file.ensemble.as_ref().map(|s| &s.layout),
            self.file.ramsey.as_ref().map(|s| &s.ensemble.layout),
            self.file.mw.as_ref().map(|s| &s.layout),
        ];
        for layout in layouts.into_iter().flatten() {
            let p = self.resolve(Path::new(layout));
            if !p.exists() {
                return Err(ConfigError::MissingFile(p));
            }
        }
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pick a section or fail naming it, for `run <subcommand>` dispatch.
macro_rules! section_accessor {
    ($name:ident, $field:ident, $ty:ty) => {
        impl Scenario {
            pub fn $name(&self) -> Result<&$ty, ConfigError> {
                self.file
                    .$field
                    .as_ref()
                    .ok_or(ConfigError::MissingSection {
                        scenario: self.file.scenario.clone(),
                        section: stringify!($field),
                    })
            }
        }
    };
}

section_accessor!(field_section, field, FieldSection);
section_accessor!(trap_section, trap, TrapSection);
section_accessor!(calibrate_section, calibrate, CalibrateSection);
section_accessor!(ensemble_section, ensemble, EnsembleSection);
section_accessor!(ramsey_section, ramsey, RamseySection);
section_accessor!(clock_section, clock, ClockSection);
section_accessor!(allan_section, allan, AllanSection);
section_accessor!(mw_section, mw, MwSection);

// ---------------------------------------------------------------------------
// Shared pieces

/// Rectilinear evaluation grid (config boundary: µm).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin_um: [f64; 3],
    pub step_um: [f64; 3],
    pub shape: [usize; 3],
}

impl GridSpec {
    /// Expand to SI points, x fastest.
    pub fn points(&self) -> Result<Vec<Vector3<f64>>, ConfigError> {
        let n: usize = self.shape.iter().product();
        if n == 0 {
            return Err(bad("shape", "grid has zero points"));
        }
        if n > 2_000_000 {
            return Err(bad("shape", format!("grid has {n} points; limit 2e6")));
        }
        let mut pts = Vec::with_capacity(n);
        for k in 0..self.shape[2] {
            for j in 0..self.shape[1] {
                for i in 0..self.shape[0] {
                    pts.push(Vector3::new(
                        (self.origin_um[0] + i as f64 * self.step_um[0]) * UM,
                        (self.origin_um[1] + j as f64 * self.step_um[1]) * UM,
                        (self.origin_um[2] + k as f64 * self.step_um[2]) * UM,
                    ));
                }
            }
        }
        Ok(pts)
    }
}

pub fn axis_index(name: &str) -> Result<usize, ConfigError> {
    match name {
        "x" => Ok(0),
        "y" => Ok(1),
        "z" => Ok(2),
        other => Err(bad(
            "free_axis",
            format!("expected x, y or z, got {other:?}"),
        )),
    }
}

/// Parse a state written as "F,mF", e.g. "1,-1" or "2,1".
pub fn parse_state(text: &str) -> Result<HyperfineState, ConfigError> {
    let (f, mf) = text
        .split_once(',')
        .ok_or_else(|| bad("state", format!("expected \"F,mF\", got {text:?}")))?;
    let f: i32 = f
        .trim()
        .parse()
        .map_err(|e| bad("state", format!("bad F in {text:?}: {e}")))?;
    let mf: i32 = mf
        .trim()
        .parse()
        .map_err(|e| bad("state", format!("bad mF in {text:?}: {e}")))?;
    HyperfineState::new(f, mf).map_err(|e| bad("state", e.to_string()))
}

pub fn position_si(um: [f64; 3]) -> Vector3<f64> {
    Vector3::new(um[0] * UM, um[1] * UM, um[2] * UM)
}

// ---------------------------------------------------------------------------
// Sections

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub layout: String,
    #[serde(flatten)]
    pub grid: GridSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub layout: String,
    pub seed_position_um: [f64; 3],
    #[serde(default = "default_true")]
    pub gravity: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub layout: String,
    pub seed_position_um: [f64; 3],
    pub free_axis: String,
    /// Calibration target in G; defaults to the magic field.
    pub target_b0_g: Option<f64>,
}

impl CalibrateSection {
    pub fn target_b0_si(&self) -> Option<f64> {
        self.target_b0_g.map(|g| g * GAUSS)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub layout: String,
    pub seed_position_um: [f64; 3],
    /// When set, calibrate this bias axis to the magic field first.
    pub calibrate_axis: Option<String>,
    pub atom_count: f64,
    pub temperature_uk: f64,
    pub samples: usize,
    /// "trajectory" (default) or "frozen".
    #[serde(default = "default_averaging")]
    pub averaging: String,
    /// Collisional shift coefficient, Hz·m³.
    pub collisional_coefficient_hz_m3: Option<f64>,
    /// When set, skip trap location and use this idealized harmonic trap
    /// (e.g. to reproduce a quoted frequency triple exactly).
    pub synthetic_trap: Option<SyntheticTrapSpec>,
}

/// An idealized harmonic trap given directly by its frequencies.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTrapSpec {
    pub frequencies_hz: [f64; 3],
    /// Trap-bottom field in G; defaults to the magic field.
    pub b_min_g: Option<f64>,
    /// Atom–surface distance, µm.
    pub distance_um: f64,
}

impl EnsembleSection {
    pub fn temperature_si(&self) -> Result<f64, ConfigError> {
        if self.temperature_uk <= 0.0 {
            return Err(bad("temperature_uk", "must be positive"));
        }
        Ok(self.temperature_uk * MICROKELVIN)
    }

    pub fn averaging_mode(&self) -> Result<crate::ensemble::AveragingMode, ConfigError> {
        match self.averaging.as_str() {
            "trajectory" => Ok(crate::ensemble::AveragingMode::TrajectoryAveraged),
            "frozen" => Ok(crate::ensemble::AveragingMode::Frozen),
            other => Err(bad(
                "averaging",
                format!("expected \"trajectory\" or \"frozen\", got {other:?}"),
            )),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_averaging() -> String {
    "trajectory".to_owned()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySection {
    #[serde(flatten)]
    pub ensemble: EnsembleSection,
    pub rabi_hz: f64,
    /// "ideal" (default) or "finite".
    #[serde(default = "default_pulse_model")]
    pub pulse_model: String,
    pub scan: ScanSpec,
    pub noise: Option<NoiseSpec>,
    pub loss: Option<LossSpec>,
}

fn default_pulse_model() -> String {
    "ideal".to_owned()
}

impl RamseySection {
    pub fn pulse_model(&self) -> Result<PulseModel, ConfigError> {
        match self.pulse_model.as_str() {
            "ideal" => Ok(PulseModel::Ideal),
            "finite" => Ok(PulseModel::Finite),
            other => Err(bad(
                "pulse_model",
                format!("expected \"ideal\" or \"finite\", got {other:?}"),
            )),
        }
    }
}

/// Scan specification: either Ramsey time or drive detuning is swept.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "type")]
pub enum ScanSpec {
    #[serde(rename = "time")]
    Time {
        start_s: f64,
        stop_s: f64,
        points: usize,
        #[serde(default)]
        detuning_hz: f64,
    },
    #[serde(rename = "frequency")]
    Frequency {
        start_hz: f64,
        stop_hz: f64,
        points: usize,
        ramsey_time_s: f64,
    },
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

impl ScanSpec {
    pub fn to_scan(&self) -> Result<Scan, ConfigError> {
        match *self {
            ScanSpec::Time {
                start_s,
                stop_s,
                points,
                detuning_hz,
            } => {
                if points < 2 {
                    return Err(bad("points", "scan needs at least 2 points"));
                }
                Ok(Scan::Time {
                    ramsey_times: linspace(start_s, stop_s, points),
                    drive_detuning_hz: detuning_hz,
                })
            }
            ScanSpec::Frequency {
                start_hz,
                stop_hz,
                points,
                ramsey_time_s,
            } => {
                if points < 2 {
                    return Err(bad("points", "scan needs at least 2 points"));
                }
                Ok(Scan::Frequency {
                    detunings_hz: linspace(start_hz, stop_hz, points),
                    ramsey_time: ramsey_time_s,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub detection_atoms_rms: f64,
    #[serde(default)]
    pub common_frequency_rms_hz: f64,
}

impl NoiseSpec {
    pub fn to_noise(&self) -> crate::coherence::RunNoise {
        crate::coherence::RunNoise {
            detection_atoms_rms: self.detection_atoms_rms,
            common_frequency_rms_hz: self.common_frequency_rms_hz,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    /// (distance µm, lifetime s) anchor pairs for the |0⟩ lifetime.
    pub anchors_um_s: Option<Vec<[f64; 2]>>,
    /// τ₁/τ₀ ratio.
    pub state1_factor: Option<f64>,
    /// Trap–surface distance at which lifetimes apply, µm.
    pub distance_um: f64,
    /// Pad every shot to this total time with a variable hold.
    pub constant_total_time_s: Option<f64>,
}

impl LossSpec {
    pub fn to_loss(&self) -> crate::coherence::LossModel {
        let default = DecayModel::default();
        crate::coherence::LossModel {
            decay: DecayModel {
                anchors: self
                    .anchors_um_s
                    .as_ref()
                    .map(|a| a.iter().map(|p| (p[0] * UM, p[1])).collect())
                    .unwrap_or(default.anchors),
                state1_factor: self.state1_factor.unwrap_or(default.state1_factor),
            },
            distance: self.distance_um * UM,
            constant_total_time: self.constant_total_time_s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub ramsey_time_s: f64,
    pub cycle_s: f64,
    pub atoms: f64,
    pub contrast: f64,
    /// Operating phase in units of π (0.5 = quadrature).
    #[serde(default = "default_half")]
    pub operating_phase_pi: f64,
    pub shots: usize,
    #[serde(default)]
    pub collisional_shift_hz: f64,
    pub budget: Option<BudgetSpec>,
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default)]
    pub field_offset_mg: f64,
    #[serde(default)]
    pub field_jitter_mg: f64,
    #[serde(default)]
    pub atom_number_fraction: f64,
    #[serde(default)]
    pub detection_atoms_rms: f64,
}

impl BudgetSpec {
    pub fn to_budget(&self) -> NoiseBudget {
        NoiseBudget {
            field_offset_t: self.field_offset_mg * MILLIGAUSS,
            field_jitter_t: self.field_jitter_mg * MILLIGAUSS,
            atom_number_fraction: self.atom_number_fraction,
            detection_atoms_rms: self.detection_atoms_rms,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllanSection {
    /// CSV produced by the `clock` subcommand. Relative paths resolve
    /// against the output directory first, then the scenario directory.
    pub input: String,
    /// Also fit the white-frequency-noise model.
    #[serde(default = "default_true")]
    pub fit: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwSection {
    pub layout: String,
    pub source: MwSourceSpec,
    /// Static-splitting threshold below which points are flagged, Hz.
    #[serde(default = "default_splitting")]
    pub splitting_threshold_hz: f64,
    /// Explicit evaluation points, µm. Either this or the grid.
    pub points_um: Option<Vec<[f64; 3]>>,
    pub grid: Option<GridSpec>,
}

fn default_splitting() -> f64 {
    1.0e6
}

impl MwSection {
    pub fn points(&self) -> Result<Vec<Vector3<f64>>, ConfigError> {
        match (&self.points_um, &self.grid) {
            (Some(pts), None) => Ok(pts.iter().map(|p| position_si(*p)).collect()),
            (None, Some(grid)) => grid.points(),
            (Some(_), Some(_)) => Err(bad("points_um", "give either points_um or grid, not both")),
            (None, None) => Err(bad("points_um", "give points_um or grid")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwSourceSpec {
    #[serde(rename = "segment")]
    pub segments: Vec<MwSegmentSpec>,
    pub drive: DriveSpecConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwSegmentSpec {
    #[serde(default)]
    pub name: String,
    pub start_um: [f64; 3],
    pub end_um: [f64; 3],
    /// Peak-to-peak microwave current, mA ("20 mApp" → 20.0 here).
    pub current_ma_pp: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum DriveSpecConfig {
    /// Absolute drive frequency, Hz.
    #[serde(rename = "frequency_hz")]
    Frequency(f64),
    /// Offset from a named transition at a reference static field.
    #[serde(rename = "detuned")]
    Detuned {
        lower: String,
        upper: String,
        offset_hz: f64,
        reference_field_g: f64,
    },
}

impl MwSourceSpec {
    pub fn to_source(&self) -> Result<crate::mw_nearfield::MwSource, ConfigError> {
        use crate::fieldmap::WireSegment;
        use crate::mw_nearfield::{DriveSpec, MwSource};
        let segments = self
            .segments
            .iter()
            .map(|s| {
                WireSegment::new(
                    position_si(s.start_um),
                    position_si(s.end_um),
                    MwSource::amplitude_from_peak_to_peak(s.current_ma_pp * MILLIAMP),
                )
                .map_err(|e| bad("segment", e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let drive = match &self.drive {
            DriveSpecConfig::Frequency(f) => DriveSpec::Frequency(*f),
            DriveSpecConfig::Detuned {
                lower,
                upper,
                offset_hz,
                reference_field_g,
            } => DriveSpec::Detuned {
                lower: parse_state(lower)?,
                upper: parse_state(upper)?,
                offset_hz: *offset_hz,
                reference_field_t: reference_field_g * GAUSS,
            },
        };
        Ok(MwSource { segments, drive })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    const LAYOUT: &str = r#"
h_e_um = 27.0
bias_g = [0.0, -5.5, 0.0]
[[segment]]
start_um = [-1000.0, 0.0, 0.0]
end_um = [1000.0, 0.0, 0.0]
current_ma = 500.0
"#;

    #[test]
    fn parses_trap_scenario_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "layout.toml", LAYOUT);
        let cfg = write_tmp(
            dir.path(),
            "scenario.toml",
            r#"
scenario = "trap-demo"
seed = 7
[trap]
layout = "layout.toml"
seed_position_um = [0.0, 0.0, 180.0]
"#,
        );
        let s = Scenario::from_file(&cfg).unwrap();
        assert_eq!(s.file.scenario, "trap-demo");
        assert_eq!(s.file.seed, Some(7));
        assert_eq!(s.config_hash.len(), 64);
        let trap = s.trap_section().unwrap();
        assert!(trap.gravity);
        assert!(s.resolve(Path::new(&trap.layout)).exists());
        // asking for an absent section names it
        let err = s.clock_section().unwrap_err();
        assert!(err.to_string().contains("[clock]"), "{err}");
    }

    #[test]
    fn unknown_field_is_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_tmp(
            dir.path(),
            "bad.toml",
            r#"
scenario = "bad"
[clock]
ramsey_time_s = 1.0
cycle_s = 23.0
atoms = 1e4
contrast = 0.8
shots = 100
ramsey_time_ms = 1000.0
"#,
        );
        let err = Scenario::from_file(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ramsey_time_ms"), "{msg}");
    }

    #[test]
    fn missing_layout_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_tmp(
            dir.path(),
            "scenario.toml",
            r#"
scenario = "missing"
[trap]
layout = "nope.toml"
seed_position_um = [0.0, 0.0, 100.0]
"#,
        );
        let err = Scenario::from_file(&cfg).unwrap_err();
        assert!(matches!(err, ConfigError::MissingFile(_)), "{err}");
    }

    #[test]
    fn scan_specs_expand() {
        let spec = ScanSpec::Frequency {
            start_hz: -2.0,
            stop_hz: 2.0,
            points: 5,
            ramsey_time_s: 1.0,
        };
        let Scan::Frequency {
            detunings_hz,
            ramsey_time,
        } = spec.to_scan().unwrap()
        else {
            panic!("wrong scan kind");
        };
        assert_eq!(detunings_hz, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(ramsey_time, 1.0);

        let bad = ScanSpec::Time {
            start_s: 0.0,
            stop_s: 1.0,
            points: 1,
            detuning_hz: 0.0,
        };
        assert!(bad.to_scan().is_err());
    }

    #[test]
    fn grid_expands_x_fastest() {
        let g = GridSpec {
            origin_um: [0.0, 0.0, 10.0],
            step_um: [1.0, 2.0, 0.0],
            shape: [2, 2, 1],
        };
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 4);
        assert!((pts[1].x - 1e-6).abs() < 1e-18);
        assert!((pts[2].y - 2e-6).abs() < 1e-18);
        assert!((pts[0].z - 10e-6).abs() < 1e-18);
    }

    #[test]
    fn state_and_axis_parsing() {
        let s = parse_state("1,-1").unwrap();
        assert_eq!(s.f_quantum(), 1);
        assert_eq!(s.mf_quantum(), -1);
        assert!(parse_state("3,0").is_err());
        assert_eq!(axis_index("y").unwrap(), 1);
        assert!(axis_index("w").is_err());
    }

    #[test]
    fn mw_source_converts_peak_to_peak() {
        let spec: MwSourceSpec = toml::from_str(
            r#"
drive = { frequency_hz = 6.8e9 }
[[segment]]
start_um = [-1000.0, 0.0, 0.0]
end_um = [1000.0, 0.0, 0.0]
current_ma_pp = 20.0
"#,
        )
        .unwrap();
        let src = spec.to_source().unwrap();
        assert!((src.segments[0].current - 0.010).abs() < 1e-15);
    }
}
