//! Command-line front end: runs scenario files and writes CSV artifacts.
//!
//! Every output file starts with `#` header lines carrying the scenario
//! name, the SHA-256 of the configuration file, the RNG seed, and the
//! constant-table version, so results are traceable to their inputs.
//! Exit codes: 0 success, 1 configuration error, 2 physics error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::Vector3;

use atomchip::clock::{self, ClockParams, NoiseBudget, CARRIER_HZ};
use atomchip::coherence::{self, Scan};
use atomchip::config::{self, Scenario};
use atomchip::constants::{PhysicalConstants, CONSTANT_TABLE_VERSION};
use atomchip::ensemble::{self, ShiftModel};
use atomchip::fieldmap::ChipLayout;
use atomchip::fitting;
use atomchip::hyperfine::{BreitRabiModel, HyperfineState};
use atomchip::mw_nearfield as mw;
use atomchip::trapchar::{self, TrapAnalysis};

const GAUSS: f64 = 1e-4;
const UM: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "atomchip",
    version,
    about = "Atom-chip microtrap and clock simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the scenario's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts (created if absent).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for grid evaluations; `ATOMCHIP_THREADS` also works.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Evaluate the static field on a grid.
    Field,
    /// Locate and characterize the trap minimum.
    Trap,
    /// Compute the magic field and calibrate the bias to it.
    Calibrate,
    /// Sample a thermal ensemble and its clock-transition shifts.
    Ensemble,
    /// Simulate a Ramsey scan over the ensemble.
    Ramsey,
    /// Simulate a shot-by-shot clock run.
    Clock,
    /// Allan deviation of a clock series CSV.
    Allan,
    /// Microwave near-field AC Zeeman potentials.
    Mw,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Physics(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Physics(m) => write!(f, "physics error: {m}"),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn phys(e: impl std::fmt::Display) -> CliError {
    CliError::Physics(e.to_string())
}

fn io_err(e: std::io::Error, path: &Path) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(1),
                CliError::Physics(_) => ExitCode::from(2),
            }
        }
    }
}

/// Execution context shared by all subcommands.
struct Ctx<'a> {
    scenario: &'a Scenario,
    seed: u64,
    out: &'a Path,
    threads: usize,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <scenario file> is required".into()))?;
    let scenario = Scenario::from_file(config_path)?;
    let seed = cli.seed.or(scenario.file.seed).unwrap_or(0);
    std::fs::create_dir_all(&cli.out).map_err(|e| io_err(e, &cli.out))?;
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("ATOMCHIP_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1);
    let ctx = Ctx {
        scenario: &scenario,
        seed,
        out: &cli.out,
        threads,
    };
    match cli.command {
        Command::Field => run_field(&ctx),
        Command::Trap => run_trap(&ctx),
        Command::Calibrate => run_calibrate(&ctx),
        Command::Ensemble => run_ensemble(&ctx),
        Command::Ramsey => run_ramsey(&ctx),
        Command::Clock => run_clock(&ctx),
        Command::Allan => run_allan(&ctx),
        Command::Mw => run_mw(&ctx),
    }
}

// ---------------------------------------------------------------------------
// Artifact output

struct Artifact {
    w: BufWriter<File>,
    path: PathBuf,
}

impl Artifact {
    fn create(ctx: &Ctx, name: &str, extra_headers: &[String]) -> Result<Self, CliError> {
        let path = ctx.out.join(name);
        let file = File::create(&path).map_err(|e| io_err(e, &path))?;
        let mut a = Artifact {
            w: BufWriter::new(file),
            path,
        };
        a.comment(&format!("scenario = {}", ctx.scenario.file.scenario))?;
        a.comment(&format!("config_sha256 = {}", ctx.scenario.config_hash))?;
        a.comment(&format!("seed = {}", ctx.seed))?;
        a.comment(&format!("constants_version = {CONSTANT_TABLE_VERSION}"))?;
        for h in extra_headers {
            a.comment(h)?;
        }
        Ok(a)
    }

    fn comment(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.w, "# {text}").map_err(|e| io_err(e, &self.path))
    }

    fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.w, "{text}").map_err(|e| io_err(e, &self.path))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| io_err(e, &self.path))
    }
}

fn csv(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// Shared loading

fn load_layout(ctx: &Ctx, rel: &str) -> Result<ChipLayout, CliError> {
    let path = ctx.scenario.resolve(Path::new(rel));
    ChipLayout::from_file(&path).map_err(|e| CliError::Config(e.to_string()))
}

/// Evaluate `f` over `points`, preserving order, on `ctx.threads` workers.
fn parallel_map<T, F>(ctx: &Ctx, points: &[Vector3<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Vector3<f64>) -> T + Sync,
{
    if ctx.threads <= 1 || points.len() < 2 {
        return points.iter().map(&f).collect();
    }
    let chunk = points.len().div_ceil(ctx.threads);
    let mut results: Vec<Vec<T>> = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<T>>()))
            .collect();
        for h in handles {
            results.push(h.join().expect("worker panicked"));
        }
    });
    results.into_iter().flatten().collect()
}

// ---------------------------------------------------------------------------
// Subcommands

fn run_field(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.field_section()?;
    let layout = load_layout(ctx, &section.layout)?;
    let points = section.grid.points()?;
    let samples = parallel_map(ctx, &points, |p| layout.total_field(p));
    let mut art = Artifact::create(ctx, "field.csv", &[])?;
    art.line("x_um,y_um,z_um,bx_g,by_g,bz_g,b_g")?;
    for (p, s) in points.iter().zip(samples) {
        let s = s.map_err(phys)?;
        art.line(&csv(&[
            p.x / UM,
            p.y / UM,
            p.z / UM,
            s.b.x / GAUSS,
            s.b.y / GAUSS,
            s.b.z / GAUSS,
            s.b.norm() / GAUSS,
        ]))?;
    }
    art.finish()
}

fn write_trap_record(ctx: &Ctx, name: &str, ta: &TrapAnalysis) -> Result<(), CliError> {
    let mut art = Artifact::create(ctx, name, &[])?;
    art.line(
        "x_um,y_um,z_um,b_min_g,f1_hz,f2_hz,f3_hz,d_um,dw_um,residual_gradient_t_per_m,\
         axis1_x,axis1_y,axis1_z,axis2_x,axis2_y,axis2_z,axis3_x,axis3_y,axis3_z",
    )?;
    let mut row = vec![
        ta.minimum_position.x / UM,
        ta.minimum_position.y / UM,
        ta.minimum_position.z / UM,
        ta.b_min / GAUSS,
        ta.frequencies[0],
        ta.frequencies[1],
        ta.frequencies[2],
        ta.distance_d / UM,
        ta.distance_dw / UM,
        ta.residual_gradient,
    ];
    for axis in &ta.axes {
        row.extend([axis.x, axis.y, axis.z]);
    }
    art.line(&csv(&row))?;
    art.finish()
}

fn run_trap(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.trap_section()?;
    let layout = load_layout(ctx, &section.layout)?;
    let seed = config::position_si(section.seed_position_um);
    let ta = trapchar::find_minimum(&layout, HyperfineState::clock_0(), seed, section.gravity)
        .map_err(phys)?;
    write_trap_record(ctx, "trap.csv", &ta)
}

fn run_calibrate(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.calibrate_section()?;
    let layout = load_layout(ctx, &section.layout)?;
    let model = BreitRabiModel::new(PhysicalConstants::rb87());
    let magic = model.magic_field().map_err(phys)?;
    let beta = model.quadratic_coefficient().map_err(phys)?;
    let target = section.target_b0_si().unwrap_or(magic);
    let axis = config::axis_index(&section.free_axis)?;
    let seed = config::position_si(section.seed_position_um);
    let (calibrated, ta) =
        trapchar::calibrate_bias(&layout, HyperfineState::clock_0(), seed, axis, target)
            .map_err(phys)?;
    let mut art = Artifact::create(ctx, "calibrate.csv", &[])?;
    art.line(
        "magic_field_g,quadratic_coefficient_hz_per_g2,target_b0_g,b_min_g,\
         residual_g,bias_x_g,bias_y_g,bias_z_g",
    )?;
    art.line(&csv(&[
        magic / GAUSS,
        beta * GAUSS * GAUSS,
        target / GAUSS,
        ta.b_min / GAUSS,
        (ta.b_min - target) / GAUSS,
        calibrated.bias.x / GAUSS,
        calibrated.bias.y / GAUSS,
        calibrated.bias.z / GAUSS,
    ]))?;
    art.finish()
}

/// Build the trap the ensemble lives in: either from the layout (optionally
/// recalibrated) or a synthetic harmonic trap with stated frequencies.
fn ensemble_trap(
    section: &config::EnsembleSection,
    layout: &ChipLayout,
    model: &BreitRabiModel,
) -> Result<TrapAnalysis, CliError> {
    let c = PhysicalConstants::rb87();
    if let Some(synth) = &section.synthetic_trap {
        let magic = model.magic_field().map_err(phys)?;
        let b_min = synth.b_min_g.map(|g| g * GAUSS).unwrap_or(magic);
        let mut curvatures = [0.0; 3];
        for i in 0..3 {
            let w = 2.0 * std::f64::consts::PI * synth.frequencies_hz[i];
            curvatures[i] = w * w * c.rb87_mass / (0.5 * c.bohr_magneton);
        }
        let d = synth.distance_um * UM;
        return Ok(TrapAnalysis {
            minimum_position: Vector3::new(0.0, 0.0, d + layout.surface_height),
            b_min,
            b_min_vector: Vector3::new(b_min, 0.0, 0.0),
            frequencies: synth.frequencies_hz,
            axes: [Vector3::x(), Vector3::y(), Vector3::z()],
            distance_d: d,
            distance_dw: d + layout.wire_depth,
            curvatures,
            residual_gradient: 0.0,
        });
    }
    let seed = config::position_si(section.seed_position_um);
    let layout = match &section.calibrate_axis {
        Some(axis) => {
            let magic = model.magic_field().map_err(phys)?;
            let axis = config::axis_index(axis)?;
            trapchar::calibrate_bias(layout, HyperfineState::clock_0(), seed, axis, magic)
                .map_err(phys)?
                .0
        }
        None => layout.clone(),
    };
    trapchar::find_minimum(&layout, HyperfineState::clock_0(), seed, true).map_err(phys)
}

fn build_ensemble(
    ctx: &Ctx,
    section: &config::EnsembleSection,
) -> Result<(ensemble::ThermalEnsemble, TrapAnalysis, ChipLayout), CliError> {
    let layout = load_layout(ctx, &section.layout)?;
    let model = BreitRabiModel::new(PhysicalConstants::rb87());
    let ta = ensemble_trap(section, &layout, &model)?;
    let cloud = ensemble::sample_thermal(
        &ta,
        section.atom_count,
        section.temperature_si()?,
        section.samples,
        ctx.seed,
    )
    .map_err(phys)?;
    let shift_model = ShiftModel {
        collisional_coefficient: section
            .collisional_coefficient_hz_m3
            .unwrap_or(ShiftModel::default().collisional_coefficient),
        averaging_mode: section.averaging_mode()?,
    };
    let cloud = ensemble::assign_shifts(cloud, &layout, &shift_model, &model).map_err(phys)?;
    Ok((cloud, ta, layout))
}

fn run_ensemble(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.ensemble_section()?;
    let (cloud, ta, _) = build_ensemble(ctx, section)?;
    let n0 = ensemble::peak_density(cloud.atom_count, cloud.temperature, &ta).map_err(phys)?;
    let sigmas = ensemble::thermal_sigmas(&ta, cloud.temperature);

    let mut art = Artifact::create(ctx, "ensemble.csv", &[])?;
    art.line(
        "peak_density_cm3,sigma_x_um,sigma_y_um,sigma_z_um,shift_mean_hz,shift_std_hz,\
         b_min_g,f1_hz,f2_hz,f3_hz,d_um,calibration_warning",
    )?;
    art.line(&csv(&[
        n0 * 1e-6,
        sigmas[0] / UM,
        sigmas[1] / UM,
        sigmas[2] / UM,
        cloud.shift_mean(),
        cloud.shift_std(),
        ta.b_min / GAUSS,
        ta.frequencies[0],
        ta.frequencies[1],
        ta.frequencies[2],
        ta.distance_d / UM,
        if cloud.calibration_warning { 1.0 } else { 0.0 },
    ]))?;
    art.finish()?;

    let mut shifts = Artifact::create(ctx, "ensemble_shifts.csv", &[])?;
    shifts.line("x_um,y_um,z_um,shift_hz")?;
    for atom in &cloud.samples {
        shifts.line(&csv(&[
            atom.position.x / UM,
            atom.position.y / UM,
            atom.position.z / UM,
            atom.local_shift,
        ]))?;
    }
    shifts.finish()
}

fn run_ramsey(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.ramsey_section()?;
    let (cloud, ta, _) = build_ensemble(ctx, &section.ensemble)?;
    let scan = section.scan.to_scan()?;
    let noise = section.noise.as_ref().map(|n| n.to_noise());
    let loss_model;
    let loss = match &section.loss {
        Some(spec) => {
            let mut l = spec.to_loss();
            if l.distance == 0.0 {
                l.distance = ta.distance_d;
            }
            loss_model = l;
            Some(&loss_model)
        }
        None => None,
    };
    let run = coherence::ramsey_ensemble(
        &cloud.shifts(),
        section.rabi_hz,
        section.pulse_model()?,
        &scan,
        cloud.atom_count,
        loss,
        noise.as_ref(),
        ctx.seed,
    )
    .map_err(phys)?;

    let coordinate = match &scan {
        Scan::Time { .. } => "ramsey_time_s",
        Scan::Frequency { .. } => "detuning_hz",
    };
    let mut art = Artifact::create(ctx, "ramsey.csv", &[])?;
    art.line(&format!("{coordinate},n1,n0,n1_ideal,n0_ideal"))?;
    for (i, v) in scan.values().iter().enumerate() {
        art.line(&csv(&[
            *v,
            run.n1[i],
            run.n0[i],
            run.n1_ideal[i],
            run.n0_ideal[i],
        ]))?;
    }
    art.finish()?;

    // frequency scans get a contrast fit; time scans a damped-sine fit
    match &scan {
        Scan::Frequency { .. } => {
            let result = coherence::contrast(&run).map_err(phys)?;
            let mut fit = Artifact::create(ctx, "ramsey_fit.csv", &[])?;
            fit.line(
                "contrast,signal_to_noise,amplitude,frequency_hz,phase_rad,offset,residual_std",
            )?;
            fit.line(&csv(&[
                result.contrast,
                result.signal_to_noise,
                result.fit.amplitude,
                result.fit.frequency,
                result.fit.phase,
                result.fit.offset,
                result.fit.residual_std,
            ]))?;
            fit.finish()
        }
        Scan::Time { ramsey_times, .. } => {
            let fraction: Vec<f64> = run
                .n1
                .iter()
                .zip(&run.n0)
                .map(|(a, b)| a / (a + b))
                .collect();
            let result = fitting::fit_damped_sine(ramsey_times, &fraction).map_err(phys)?;
            let mut fit = Artifact::create(ctx, "ramsey_fit.csv", &[])?;
            fit.line(
                "amplitude,frequency_hz,phase_rad,offset,decay_time_s,\
                 sigma_amplitude,sigma_frequency_hz,sigma_phase_rad,sigma_offset,sigma_decay_s,\
                 residual_rms,decay_is_lower_bound",
            )?;
            fit.line(&csv(&[
                result.amplitude,
                result.frequency,
                result.phase,
                result.offset,
                result.decay_time,
                result.uncertainties[0],
                result.uncertainties[1],
                result.uncertainties[2],
                result.uncertainties[3],
                result.uncertainties[4],
                result.residual_rms,
                if result.decay_is_lower_bound {
                    1.0
                } else {
                    0.0
                },
            ]))?;
            fit.finish()
        }
    }
}

fn run_clock(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.clock_section()?;
    let model = BreitRabiModel::new(PhysicalConstants::rb87());
    let beta = model.quadratic_coefficient().map_err(phys)?;
    let params = ClockParams {
        ramsey_time: section.ramsey_time_s,
        cycle_period: section.cycle_s,
        mean_atom_number: section.atoms,
        contrast: section.contrast,
        operating_phase: section.operating_phase_pi * std::f64::consts::PI,
        quadratic_coefficient_hz_per_t2: beta,
        collisional_shift_hz: section.collisional_shift_hz,
        budget: section
            .budget
            .as_ref()
            .map(|b| b.to_budget())
            .unwrap_or_else(NoiseBudget::default),
        shots: section.shots,
        seed: ctx.seed,
    };
    let series = clock::run_clock(&params).map_err(phys)?;
    let headers = vec![
        format!("cycle_s = {:.17e}", series.cycle_period),
        format!("carrier_hz = {CARRIER_HZ:.17e}"),
        format!("rms_hz = {:.17e}", series.rms_hz()),
        format!("slope_atoms_per_hz = {:.17e}", series.slope_atoms_per_hz),
    ];
    let mut art = Artifact::create(ctx, "clock_series.csv", &headers)?;
    art.line("shot,time_s,inferred_hz,true_hz,fractional_y")?;
    let y = series.fractional();
    for (i, yi) in y.iter().enumerate() {
        art.line(&format!(
            "{i},{},{}",
            csv(&[
                (i as f64 + 1.0) * series.cycle_period,
                series.inferred_frequency_hz[i],
                series.true_frequency_hz[i],
            ]),
            format!("{yi:.17e}")
        ))?;
    }
    art.finish()
}

fn run_allan(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.allan_section()?;
    let rel = Path::new(&section.input);
    let path = if rel.is_absolute() {
        rel.to_owned()
    } else {
        let in_out = ctx.out.join(rel);
        if in_out.exists() {
            in_out
        } else {
            ctx.scenario.resolve(rel)
        }
    };
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(e, &path))?;
    let mut cycle = None;
    let mut y = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "cycle_s" {
                    cycle = value.trim().parse::<f64>().ok();
                }
            }
            continue;
        }
        if line.starts_with("shot") {
            continue; // column header
        }
        let last = line.rsplit(',').next().unwrap_or_default();
        let value: f64 = last.parse().map_err(|e| {
            CliError::Config(format!(
                "{}: bad fractional_y value {last:?}: {e}",
                path.display()
            ))
        })?;
        y.push(value);
    }
    let cycle = cycle.ok_or_else(|| {
        CliError::Config(format!(
            "{}: missing '# cycle_s = ...' header",
            path.display()
        ))
    })?;
    let ms = clock::default_averaging_factors(y.len());
    let points = clock::allan_deviation(&y, cycle, &ms).map_err(phys)?;
    let mut headers = Vec::new();
    if section.fit {
        let fit = clock::fit_stability(&points).map_err(phys)?;
        headers.push(format!("white_fm_coefficient = {:.17e}", fit.coefficient));
        headers.push(format!("free_exponent = {:.17e}", fit.free_exponent));
        headers.push(format!("departs_from_white = {}", fit.departs_from_white));
    }
    let mut art = Artifact::create(ctx, "allan.csv", &headers)?;
    art.line("tau_s,sigma_y,averaging_factor")?;
    for p in &points {
        art.line(&format!(
            "{:.17e},{:.17e},{}",
            p.tau,
            p.sigma,
            (p.tau / cycle).round() as u64
        ))?;
    }
    art.finish()
}

fn run_mw(ctx: &Ctx) -> Result<(), CliError> {
    let section = ctx.scenario.mw_section()?;
    let layout = load_layout(ctx, &section.layout)?;
    let source = section.source.to_source()?;
    let points = section.points()?;
    let map = mw::potential_map(&source, &layout, &points, section.splitting_threshold_hz)
        .map_err(phys)?;
    for (i, e) in &map.errors {
        eprintln!("point {i}: {e}");
    }

    let mut art = Artifact::create(ctx, "mw_map.csv", &[])?;
    art.line(
        "x_um,y_um,z_um,u0_khz,u1_khz,umw_khz,pi_fraction,sigma_plus_fraction,\
         sigma_minus_fraction,zeeman_splitting_hz,small_splitting,near_field_ok,ok",
    )?;
    for (p, entry) in points.iter().zip(&map.points) {
        match entry {
            Some(m) => art.line(&csv(&[
                p.x / UM,
                p.y / UM,
                p.z / UM,
                m.shift0_hz * 1e-3,
                m.shift1_hz * 1e-3,
                m.differential_hz * 1e-3,
                m.polarization_fractions[0],
                m.polarization_fractions[1],
                m.polarization_fractions[2],
                m.zeeman_splitting_hz,
                if m.small_splitting { 1.0 } else { 0.0 },
                if m.near_field_ok { 1.0 } else { 0.0 },
                1.0,
            ]))?,
            None => art.line(&format!(
                "{},,,,,,,,,,,,0",
                csv(&[p.x / UM, p.y / UM, p.z / UM])
            ))?,
        }
    }
    art.finish()?;

    // partner-transition summary at the first requested point
    if let Some(point) = points.first() {
        let constants = &layout.constants;
        let sample = layout.total_field(point).map_err(phys)?;
        let amp = source.field_amplitude(point, constants).map_err(phys)?;
        let pol = mw::polarization_components(&amp.b, &sample.b).map_err(phys)?;
        let eigen = mw::eigensystem(sample.b.norm(), constants).map_err(phys)?;
        let lower_pi = mw::transition_rabi(
            &eigen,
            HyperfineState::new(1, -1).map_err(phys)?,
            HyperfineState::new(2, -1).map_err(phys)?,
            &pol,
            constants,
        )
        .map_err(phys)?;
        let upper_pi = mw::transition_rabi(
            &eigen,
            HyperfineState::new(1, 1).map_err(phys)?,
            HyperfineState::new(2, 1).map_err(phys)?,
            &pol,
            constants,
        )
        .map_err(phys)?;
        let drive = source.drive_frequency(constants).map_err(phys)?;
        let delta_lower = drive
            - eigen.transition(
                HyperfineState::new(1, -1).map_err(phys)?,
                HyperfineState::new(2, -1).map_err(phys)?,
            );
        let delta_upper = drive
            - eigen.transition(
                HyperfineState::new(1, 1).map_err(phys)?,
                HyperfineState::new(2, 1).map_err(phys)?,
            );
        let mut sum = Artifact::create(ctx, "mw_summary.csv", &[])?;
        sum.line(
            "rabi_pi_lower_hz,rabi_pi_upper_hz,detuning_lower_hz,detuning_upper_hz,\
             drive_hz,static_field_g",
        )?;
        sum.line(&csv(&[
            lower_pi,
            upper_pi,
            delta_lower,
            delta_upper,
            drive,
            sample.b.norm() / GAUSS,
        ]))?;
        sum.finish()?;
    }
    Ok(())
}
