use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qcmd::classical::NuclearCoupling;
use qcmd::egorov::{egorov_sweep, splitting_sweep, wigner_bulk, EgorovOptions, PhaseSpacePath};
use qcmd::experiments::{
    initial_state, min_error_envelope, observable_metric, sibling_path, sweep_dt, sweep_h, sweep_lattice,
    write_csv_file, write_fits, ReferenceCache, RunConfig, RunManifest, SweepMode, SweepResult,
};
use qcmd::grid::Spectral;
use qcmd::observables::{expectation_with, BUILTIN_OBSERVABLES};
use qcmd::phase_space::{husimi_on_default_box, wigner_transform};
use qcmd::potentials::REGISTERED_POTENTIALS;
use qcmd::propagator::{steps_for, Recording};
use qcmd::QcmdError;

/// Quantum–classical molecular dynamics simulator and convergence harness.
#[derive(Debug, Parser)]
#[command(name = "qcmd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve the initial state and write expectations along the trajectory.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Record every N-th step (0 records the endpoints only).
        #[arg(long, default_value_t = 0)]
        record_every: usize,
    },
    /// Temporal convergence at fixed h against the fine-step reference.
    SweepDt {
        #[command(flatten)]
        config: ConfigArgs,
        /// Step sizes.
        #[arg(long, value_delimiter = ',', value_parser = parse_number,
              default_value = "2^-6,2^-7,2^-8,2^-9,2^-10,2^-11")]
        dts: Vec<f64>,
    },
    /// Errors at fixed dt across semiclassical parameters.
    SweepH {
        #[command(flatten)]
        config: ConfigArgs,
        /// Semiclassical parameters.
        #[arg(long, value_delimiter = ',', value_parser = parse_number,
              default_value = "2^-4,2^-5,2^-6,2^-7,2^-8,2^-9,2^-10")]
        hs: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Observables)]
        mode: ModeArg,
    },
    /// Quantum expectations against transported classical phase-space averages.
    Egorov {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', value_parser = parse_number,
              default_value = "2^-4,2^-5,2^-6,2^-7,2^-8")]
        hs: Vec<f64>,
        /// Schwartz observable to transport.
        #[arg(long, default_value = "gaussian")]
        observable: String,
        #[arg(long, value_enum, default_value_t = PathArg::Wigner)]
        path: PathArg,
        #[arg(long, value_enum, default_value_t = CouplingArg::MeanField)]
        coupling: CouplingArg,
        /// Largest classical step standing in for the exact flow.
        #[arg(long, value_parser = parse_number, default_value = "1e-4")]
        classical_dt: f64,
        /// Compare Strang steps of size --dt against Störmer–Verlet steps of the same size.
        #[arg(long)]
        discrete: bool,
    },
    /// Write the Wigner or Husimi function of the state at time T.
    PhaseSpace {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = PathArg::Wigner)]
        kind: PathArg,
        /// Full n × n Wigner field instead of the window around the packet.
        #[arg(long)]
        full: bool,
    },
    /// Minimum of observable and wavefunction errors on an (h, dt) lattice.
    Envelope {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', value_parser = parse_number,
              default_value = "2^-4,2^-5,2^-6,2^-7,2^-8,2^-9,2^-10")]
        hs: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_number,
              default_value = "2^-6,2^-7,2^-8,2^-9,2^-10")]
        dts: Vec<f64>,
        #[arg(long, default_value = "gaussian")]
        observable: String,
    },
    /// Print the registered potentials and observables.
    List,
}

#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    #[arg(long, value_parser = parse_number, default_value = "0.04")]
    h: f64,
    #[arg(long, value_parser = parse_number, default_value = "2^-8")]
    dt: f64,
    #[arg(long = "T", value_parser = parse_number, default_value = "0.5")]
    t_final: f64,
    #[arg(long, default_value = "sin_x2_y2")]
    potential: String,
    #[arg(long, value_parser = parse_number, default_value = "12.5")]
    alpha: f64,
    #[arg(long, value_parser = parse_number, default_value = "-1", allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, value_parser = parse_number, default_value = "50", allow_hyphen_values = true)]
    k0: f64,
    #[arg(long, value_parser = parse_number, default_value = "1", allow_hyphen_values = true)]
    y0: f64,
    #[arg(long, value_parser = parse_number, default_value = "0", allow_hyphen_values = true)]
    v0: f64,
    #[arg(long, value_delimiter = ',', default_value = "position,momentum,gaussian,xgaussian,kinetic")]
    observables: Vec<String>,
    #[arg(long, value_parser = parse_number, default_value = "1e-5")]
    reference_dt: f64,
    #[arg(long, default_value_t = 32)]
    points_per_h: usize,
    /// Errors within ten times this value are left out of slope fits.
    #[arg(long, value_parser = parse_number, default_value = "1e-12")]
    noise_floor: f64,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output file; companions are written beside it.
    #[arg(long, default_value = "qcmd.csv")]
    out: PathBuf,
}

impl ConfigArgs {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            h: self.h,
            dt: self.dt,
            t_final: self.t_final,
            potential_name: self.potential.clone(),
            alpha: self.alpha,
            x0: self.x0,
            k0: self.k0,
            y0: self.y0,
            v0: self.v0,
            grid_points_per_h: self.points_per_h,
            observables: self.observables.clone(),
            reference_dt: self.reference_dt,
            noise_floor: self.noise_floor,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Observables,
    Wavefunction,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum PathArg {
    Wigner,
    Husimi,
}

impl From<PathArg> for PhaseSpacePath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Wigner => PhaseSpacePath::Wigner,
            PathArg::Husimi => PhaseSpacePath::Husimi,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum CouplingArg {
    MeanField,
    PerPoint,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Decimal numbers or exact powers of two written as `2^-11`.
fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| format!("bad base in '{s}'"))?;
            let exp: i32 = exp.trim().parse().map_err(|_| format!("bad exponent in '{s}'"))?;
            base.powi(exp)
        }
        None => s.parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<QcmdError> for Failure {
    fn from(e: QcmdError) -> Self {
        let message = e.to_string();
        match e {
            QcmdError::InvalidParameter { .. }
            | QcmdError::IncommensurateStep { .. }
            | QcmdError::UnknownName { .. }
            | QcmdError::NotSchwartz(_)
            | QcmdError::ResolutionTooFine { .. } => Failure::Usage(message),
            _ => Failure::Runtime(message),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {line}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error[usage]: {}", m.replace('\n', " "));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error[runtime]: {}", m.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

fn prepare_output(out: &Path) -> Result<(), Failure> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_manifest(out: &Path, manifest: RunManifest) -> Result<(), Failure> {
    manifest.write(&sibling_path(out, ".manifest.json"))?;
    Ok(())
}

fn write_sweep(out: &Path, result: &SweepResult) -> Result<(), Failure> {
    write_csv_file(out, &result.records)?;
    let file = fs::File::create(sibling_path(out, ".slopes.csv"))?;
    write_fits(std::io::BufWriter::new(file), &result.fits)?;
    for f in &result.fits {
        match f.fit {
            Some(s) => println!("{:<24} slope {:>7.3}  R² {:.4}  ({} points)", f.metric, s.slope, s.r_squared, s.points_used),
            None => println!("{:<24} slope    n/a", f.metric),
        }
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::List => {
            println!("potentials: {}", REGISTERED_POTENTIALS.join(", "));
            println!("observables: {}", BUILTIN_OBSERVABLES.join(", "));
            Ok(())
        }
        Command::Simulate { config, record_every } => simulate(&config, record_every),
        Command::SweepDt { config, dts } => {
            let cfg = config.run_config();
            prepare_output(&config.out)?;
            let result = sweep_dt(&cfg, &dts, &ReferenceCache::new())?;
            write_sweep(&config.out, &result)?;
            write_manifest(&config.out, RunManifest::new("sweep-dt", &cfg).with_parameter("dts", &dts))
        }
        Command::SweepH { config, hs, mode } => {
            let cfg = config.run_config();
            prepare_output(&config.out)?;
            let sweep_mode = match mode {
                ModeArg::Observables => SweepMode::Observables,
                ModeArg::Wavefunction => SweepMode::Wavefunction,
            };
            let result = sweep_h(&cfg, &hs, sweep_mode, &ReferenceCache::new())?;
            write_sweep(&config.out, &result)?;
            write_manifest(
                &config.out,
                RunManifest::new("sweep-h", &cfg)
                    .with_parameter("hs", &hs)
                    .with_parameter("mode", mode),
            )
        }
        Command::Egorov {
            config,
            hs,
            observable,
            path,
            coupling,
            classical_dt,
            discrete,
        } => {
            let cfg = config.run_config();
            cfg.validate()?;
            prepare_output(&config.out)?;
            let a = qcmd::observable_by_name(&observable)?;
            let options = EgorovOptions {
                coupling: match coupling {
                    CouplingArg::MeanField => NuclearCoupling::MeanField,
                    CouplingArg::PerPoint => NuclearCoupling::PerPoint,
                },
                classical_max_dt: classical_dt,
                ..EgorovOptions::default()
            };
            let report = if discrete {
                let n = steps_for(cfg.dt, cfg.t_final)?;
                splitting_sweep(&a, &cfg, &hs, cfg.dt, n, &options)?
            } else {
                egorov_sweep(&a, &cfg, &hs, cfg.t_final, path.into(), &ReferenceCache::new(), &options)?
            };
            let file = fs::File::create(&config.out)?;
            let mut out = std::io::BufWriter::new(file);
            report.write_csv(&mut out)?;
            out.flush()?;
            for i in 0..report.h_values.len() {
                println!("h {:<12} defect {:.3e}", report.h_values[i], report.defects[i]);
            }
            println!("fitted slope {:.3}", report.fitted_slope);
            write_manifest(
                &config.out,
                RunManifest::new("egorov", &cfg)
                    .with_parameter("hs", &hs)
                    .with_parameter("observable", &observable)
                    .with_parameter("path", path)
                    .with_parameter("coupling", coupling)
                    .with_parameter("classical_dt", classical_dt)
                    .with_parameter("discrete", discrete),
            )
        }
        Command::PhaseSpace { config, kind, full } => {
            let cfg = config.run_config();
            cfg.validate()?;
            prepare_output(&config.out)?;
            let n = steps_for(cfg.dt, cfg.t_final)?;
            let state = cfg
                .propagator()?
                .evolve(initial_state(&cfg)?, n, cfg.t_final, Recording::Endpoints)
                .into_last();
            let field = match (kind, full) {
                (PathArg::Wigner, true) => wigner_transform(&state.psi)?,
                (PathArg::Wigner, false) => wigner_bulk(&state.psi)?,
                (PathArg::Husimi, _) => husimi_on_default_box(&state.psi)?,
            };
            let file = fs::File::create(&config.out)?;
            let mut out = std::io::BufWriter::new(file);
            field.write_text(&mut out)?;
            out.flush()?;
            println!(
                "{} field {}×{} at T = {}, total {:.8}",
                field.kind.as_str(),
                field.n_x(),
                field.n_xi(),
                cfg.t_final,
                field.total()
            );
            write_manifest(
                &config.out,
                RunManifest::new("phase-space", &cfg)
                    .with_parameter("kind", kind)
                    .with_parameter("full", full),
            )
        }
        Command::Envelope {
            config,
            hs,
            dts,
            observable,
        } => {
            let mut cfg = config.run_config();
            if !cfg.observables.contains(&observable) {
                cfg.observables.push(observable.clone());
            }
            prepare_output(&config.out)?;
            let records = sweep_lattice(&cfg, &hs, &dts, &ReferenceCache::new())?;
            write_csv_file(&config.out, &records)?;
            let table = min_error_envelope(&records, &observable_metric(&observable), cfg.noise_floor);
            let file = fs::File::create(sibling_path(&config.out, ".envelope.csv"))?;
            let mut out = std::io::BufWriter::new(file);
            writeln!(out, "h,dt,observable_error,wavefunction_error,envelope")?;
            for r in &table.rows {
                writeln!(out, "{},{},{},{},{}", r.h, r.dt, r.observable_error, r.wavefunction_error, r.envelope)?;
            }
            out.flush()?;
            for (dt, h, e) in &table.worst_case {
                println!("dt {dt:<12} worst h {h:<12} envelope {e:.3e}");
            }
            match table.worst_case_fit {
                Some(f) => println!("worst-case slope {:.3}", f.slope),
                None => println!("worst-case slope n/a"),
            }
            write_manifest(
                &config.out,
                RunManifest::new("envelope", &cfg)
                    .with_parameter("hs", &hs)
                    .with_parameter("dts", &dts)
                    .with_parameter("observable", &observable),
            )
        }
    }
}

fn simulate(config: &ConfigArgs, record_every: usize) -> Result<(), Failure> {
    let cfg = config.run_config();
    cfg.validate()?;
    prepare_output(&config.out)?;
    let observables = cfg.resolved_observables()?;
    let n = steps_for(cfg.dt, cfg.t_final)?;
    let state0 = initial_state(&cfg)?;
    let recording = if record_every == 0 {
        Recording::Endpoints
    } else {
        Recording::Every(record_every)
    };
    let mut states = cfg.propagator()?.evolve(state0, n, cfg.t_final, recording).states;
    if n == 0 {
        states.truncate(1);
    }
    let spectral = Spectral::new(cfg.grid()?.n_points());
    let file = fs::File::create(&config.out)?;
    let mut out = std::io::BufWriter::new(file);
    let names: Vec<&str> = observables.iter().map(|o| o.name()).collect();
    writeln!(out, "time,mass,nuclear_y,nuclear_v,{}", names.join(","))?;
    for s in &states {
        let values = observables
            .iter()
            .map(|o| expectation_with(o, &s.psi, &spectral).map(|v| v.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        writeln!(out, "{},{},{},{},{}", s.time, s.psi.mass(), s.nuclear.y, s.nuclear.v, values.join(","))?;
    }
    out.flush()?;
    if let Some(last) = states.last() {
        println!("T = {}: y = {}, v = {}, mass = {}", last.time, last.nuclear.y, last.nuclear.v, last.psi.mass());
    }
    write_manifest(
        &config.out,
        RunManifest::new("simulate", &cfg).with_parameter("record_every", record_every),
    )
}
