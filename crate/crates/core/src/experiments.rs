//! Convergence experiments: configured runs, fine-step self-references,
//! error records, slope fits and CSV/manifest output.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcmdError, Result};
use crate::fit::{fit_loglog, SlopeFit};
use crate::grid::{check_h, make_grid, Grid, Spectral, WaveFunction};
use crate::observables::{expectation_with, observable_by_name, Observable};
use crate::potentials::{potential_by_name, SharedPotential};
use crate::propagator::{steps_for, NuclearState, Propagator, QcmdState, Recording};

/// Exact CSV header of every error table.
pub const CSV_HEADER: &str =
    "run_id,h,dt,T,n_points,metric,reference_value,numerical_value,abs_error,wall_time_seconds";

/// Boundary density above which the initial packet is rejected.
pub const INITIAL_BOUNDARY_THRESHOLD: f64 = 1e-10;

pub const METRIC_WAVEFUNCTION: &str = "wavefunction_l2";
pub const METRIC_NUCLEAR_Y: &str = "nuclear_y";
pub const METRIC_NUCLEAR_V: &str = "nuclear_v";

pub fn observable_metric(name: &str) -> String {
    format!("observable:{name}")
}

/// Full description of one run. Defaults reproduce the reference setup:
/// `V = sin(x² + y²)`, `ψ₀ ∝ exp(-12.5 (x+1)² + 50 i (x+1))` on `[-π, π)`,
/// `T = 0.5`, reference step `1e-5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub h: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub potential_name: String,
    pub alpha: f64,
    pub x0: f64,
    pub k0: f64,
    pub y0: f64,
    pub v0: f64,
    pub grid_points_per_h: usize,
    pub observables: Vec<String>,
    pub reference_dt: f64,
    /// Errors at or below ten times this value are left out of slope fits.
    pub noise_floor: f64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            h: 0.04,
            dt: 2f64.powi(-8),
            t_final: 0.5,
            potential_name: "sin_x2_y2".into(),
            alpha: 12.5,
            x0: -1.0,
            k0: 50.0,
            y0: 1.0,
            v0: 0.0,
            grid_points_per_h: 32,
            observables: ["position", "momentum", "gaussian", "xgaussian", "kinetic"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            reference_dt: 1e-5,
            noise_floor: 1e-12,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        check_h(self.h)?;
        steps_for(self.dt, self.t_final)?;
        steps_for(self.reference_dt, self.t_final)?;
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(invalid("alpha", format!("{} must be positive", self.alpha)));
        }
        if self.grid_points_per_h < 8 {
            return Err(invalid("points_per_h", format!("{} < 8", self.grid_points_per_h)));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        potential_by_name(&self.potential_name)?;
        self.resolved_observables()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.h, self.grid_points_per_h)
    }

    pub fn potential(&self) -> Result<SharedPotential> {
        potential_by_name(&self.potential_name)
    }

    pub fn resolved_observables(&self) -> Result<Vec<Observable>> {
        self.observables.iter().map(|n| observable_by_name(n)).collect()
    }

    pub fn propagator(&self) -> Result<Propagator> {
        Ok(Propagator::new(self.grid()?, self.h, self.potential()?))
    }

    fn reference_key(&self) -> String {
        format!(
            "{:?}|{:?}|{:?}|{}|{:?}|{:?}|{:?}|{:?}|{:?}|{}",
            self.h,
            self.t_final,
            self.reference_dt,
            self.potential_name,
            self.alpha,
            self.x0,
            self.k0,
            self.y0,
            self.v0,
            self.grid_points_per_h
        )
    }
}

/// `Z exp(-α (x - x0)² + i k0 (x - x0))` normalized on the grid, with the
/// nucleus at `(y0, v0)`.
pub fn initial_state(cfg: &RunConfig) -> Result<QcmdState> {
    check_h(cfg.h)?;
    let grid = cfg.grid()?;
    let mut psi = WaveFunction::from_fn(grid, cfg.h, |x| {
        let d = x - cfg.x0;
        Complex64::new(-cfg.alpha * d * d, cfg.k0 * d).exp()
    })?;
    psi.normalize();
    let density = psi.boundary_density();
    if density.is_nan() || density >= INITIAL_BOUNDARY_THRESHOLD {
        return Err(QcmdError::BoundaryMass {
            density,
            threshold: INITIAL_BOUNDARY_THRESHOLD,
        });
    }
    Ok(QcmdState::new(psi, NuclearState::new(cfg.y0, cfg.v0)))
}

/// Final state of a run plus the requested expectations.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: QcmdState,
    pub expectations: Vec<(String, f64)>,
    pub wall_time_seconds: f64,
}

impl RunOutcome {
    pub fn expectation(&self, name: &str) -> Option<f64> {
        self.expectations.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Evolves the configured initial state to `T` with Strang steps of `dt`.
pub fn run(cfg: &RunConfig, dt: f64) -> Result<RunOutcome> {
    let start = Instant::now();
    let n = steps_for(dt, cfg.t_final)?;
    let observables = cfg.resolved_observables()?;
    let mut prop = cfg.propagator()?;
    let state0 = initial_state(cfg)?;
    let state = prop.evolve(state0, n, cfg.t_final, Recording::Endpoints).into_last();
    let spectral = Spectral::new(state.psi.grid().n_points());
    let expectations = observables
        .iter()
        .map(|o| Ok((o.name().to_string(), expectation_with(o, &state.psi, &spectral)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        state,
        expectations,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Memoized reference runs keyed by everything that determines them.
#[derive(Debug, Default, Clone)]
pub struct ReferenceCache {
    runs: Arc<Mutex<HashMap<String, Arc<RunOutcome>>>>,
}

impl ReferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reference run for `cfg` at `cfg.reference_dt`, computed once. The
    /// stored run always carries every builtin observable.
    pub fn reference(&self, cfg: &RunConfig) -> Result<Arc<RunOutcome>> {
        let key = cfg.reference_key();
        if let Some(hit) = self.runs.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let mut full = cfg.clone();
        full.observables = crate::observables::BUILTIN_OBSERVABLES
            .iter()
            .map(|s| s.to_string())
            .collect();
        let outcome = Arc::new(run(&full, cfg.reference_dt)?);
        self.runs
            .lock()
            .expect("cache poisoned")
            .entry(key)
            .or_insert_with(|| outcome.clone());
        Ok(outcome)
    }

    pub fn len(&self) -> usize {
        self.runs.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub run_id: String,
    pub h: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_points: usize,
    pub metric: String,
    pub reference_value: f64,
    pub numerical_value: f64,
    pub abs_error: f64,
    pub wall_time_seconds: f64,
}

impl ErrorRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6}",
            self.run_id,
            self.h,
            self.dt,
            self.t_final,
            self.n_points,
            self.metric,
            self.reference_value,
            self.numerical_value,
            self.abs_error,
            self.wall_time_seconds
        )
    }
}

/// Error records of one numerical run against its reference.
pub fn compare(
    label: &str,
    cfg: &RunConfig,
    dt: f64,
    numerical: &RunOutcome,
    reference: &RunOutcome,
    observables: &[String],
) -> Vec<ErrorRecord> {
    let run_id = format!("{label}-h{}-dt{}", cfg.h, dt);
    let n_points = numerical.state.psi.grid().n_points();
    let wall = numerical.wall_time_seconds;
    let record = |metric: String, reference_value: f64, numerical_value: f64, abs_error: f64| ErrorRecord {
        run_id: run_id.clone(),
        h: cfg.h,
        dt,
        t_final: cfg.t_final,
        n_points,
        metric,
        reference_value,
        numerical_value,
        abs_error,
        wall_time_seconds: wall,
    };
    let (num, refs) = (&numerical.state, &reference.state);
    let mut out = vec![
        record(
            METRIC_WAVEFUNCTION.into(),
            refs.psi.mass().sqrt(),
            num.psi.mass().sqrt(),
            num.psi.l2_distance(&refs.psi),
        ),
        record(
            METRIC_NUCLEAR_Y.into(),
            refs.nuclear.y,
            num.nuclear.y,
            (num.nuclear.y - refs.nuclear.y).abs(),
        ),
        record(
            METRIC_NUCLEAR_V.into(),
            refs.nuclear.v,
            num.nuclear.v,
            (num.nuclear.v - refs.nuclear.v).abs(),
        ),
    ];
    for name in observables {
        if let (Some(r), Some(n)) = (reference.expectation(name), numerical.expectation(name)) {
            out.push(record(observable_metric(name), r, n, (n - r).abs()));
        }
    }
    out
}

/// Slope of one metric against the swept variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFit {
    pub metric: String,
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Dt,
    H,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<ErrorRecord>,
    pub fits: Vec<MetricFit>,
}

impl SweepResult {
    pub fn fit(&self, metric: &str) -> Option<SlopeFit> {
        self.fits.iter().find(|f| f.metric == metric).and_then(|f| f.fit)
    }

    pub fn metric_records(&self, metric: &str) -> Vec<&ErrorRecord> {
        self.records.iter().filter(|r| r.metric == metric).collect()
    }
}

/// Log–log fits per metric, excluding errors within 10× of `noise_floor`.
pub fn fit_metrics(records: &[ErrorRecord], axis: SweepAxis, noise_floor: f64) -> Vec<MetricFit> {
    let mut metrics: Vec<&str> = Vec::new();
    for r in records {
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
    }
    metrics
        .into_iter()
        .map(|m| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.metric == m)
                .map(|r| {
                    let x = match axis {
                        SweepAxis::Dt => r.dt,
                        SweepAxis::H => r.h,
                    };
                    (x, r.abs_error)
                })
                .unzip();
            MetricFit {
                metric: m.to_string(),
                fit: fit_loglog(&xs, &ys, 10.0 * noise_floor),
            }
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QcmdError::Unsupported(format!("cannot start worker pool: {e}")))
}

fn check_steps(cfg: &RunConfig, dts: &[f64]) -> Result<()> {
    for &dt in dts {
        steps_for(dt, cfg.t_final)?;
    }
    steps_for(cfg.reference_dt, cfg.t_final)?;
    Ok(())
}

/// Temporal convergence at fixed `h`: one reference run, one Strang run per
/// step size.
pub fn sweep_dt(cfg: &RunConfig, dt_list: &[f64], cache: &ReferenceCache) -> Result<SweepResult> {
    cfg.validate_basics()?;
    check_steps(cfg, dt_list)?;
    let reference = cache.reference(cfg)?;
    let records: Vec<Vec<ErrorRecord>> = pool(cfg.workers)?.install(|| {
        dt_list
            .par_iter()
            .map(|&dt| {
                let numerical = if dt == cfg.reference_dt {
                    (*reference).clone()
                } else {
                    run(cfg, dt)?
                };
                Ok(compare("dt", cfg, dt, &numerical, &reference, &cfg.observables))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let records: Vec<ErrorRecord> = records.into_iter().flatten().collect();
    let fits = fit_metrics(&records, SweepAxis::Dt, cfg.noise_floor);
    Ok(SweepResult { records, fits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    Observables,
    Wavefunction,
}

/// Dependence on `h` at fixed `cfg.dt`; each `h` gets its own grid and
/// reference run.
pub fn sweep_h(cfg: &RunConfig, h_list: &[f64], mode: SweepMode, cache: &ReferenceCache) -> Result<SweepResult> {
    cfg.validate_basics()?;
    check_steps(cfg, &[cfg.dt])?;
    for &h in h_list {
        check_h(h)?;
        cfg.with_h(h).grid()?;
    }
    let records: Vec<Vec<ErrorRecord>> = pool(cfg.workers)?.install(|| {
        h_list
            .par_iter()
            .map(|&h| {
                let c = cfg.with_h(h);
                let reference = cache.reference(&c)?;
                let numerical = run(&c, c.dt)?;
                let mut recs = compare("h", &c, c.dt, &numerical, &reference, &c.observables);
                recs.retain(|r| match mode {
                    SweepMode::Wavefunction => r.metric == METRIC_WAVEFUNCTION,
                    SweepMode::Observables => r.metric.starts_with("observable:"),
                });
                Ok(recs)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let records: Vec<ErrorRecord> = records.into_iter().flatten().collect();
    let fits = fit_metrics(&records, SweepAxis::H, cfg.noise_floor);
    Ok(SweepResult { records, fits })
}

/// Every `(h, dt)` cell of a lattice, with all metrics recorded.
pub fn sweep_lattice(cfg: &RunConfig, h_list: &[f64], dt_list: &[f64], cache: &ReferenceCache) -> Result<Vec<ErrorRecord>> {
    cfg.validate_basics()?;
    check_steps(cfg, dt_list)?;
    let cells: Vec<(f64, f64)> = h_list
        .iter()
        .flat_map(|&h| dt_list.iter().map(move |&dt| (h, dt)))
        .collect();
    // references first so parallel cells never race to build the same one
    for &h in h_list {
        cache.reference(&cfg.with_h(h))?;
    }
    let records: Vec<Vec<ErrorRecord>> = pool(cfg.workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(h, dt)| {
                let c = cfg.with_h(h).with_dt(dt);
                let reference = cache.reference(&c)?;
                let numerical = run(&c, dt)?;
                Ok(compare("lattice", &c, dt, &numerical, &reference, &c.observables))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(records.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub h: f64,
    pub dt: f64,
    pub observable_error: f64,
    pub wavefunction_error: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub rows: Vec<EnvelopeRow>,
    /// `(dt, h attaining the maximum, max over h of the envelope)`.
    pub worst_case: Vec<(f64, f64, f64)>,
    pub worst_case_fit: Option<SlopeFit>,
}

/// Per `(h, dt)`, the smaller of the observable error and the wavefunction
/// error (which bounds it up to `2‖a‖_∞`); then the worst case over `h` at
/// each `dt` and its slope in `dt`.
pub fn min_error_envelope(records: &[ErrorRecord], observable_metric_name: &str, noise_floor: f64) -> EnvelopeTable {
    let mut rows: Vec<EnvelopeRow> = Vec::new();
    for r in records.iter().filter(|r| r.metric == observable_metric_name) {
        let wf = records
            .iter()
            .find(|w| w.metric == METRIC_WAVEFUNCTION && w.h == r.h && w.dt == r.dt);
        if let Some(w) = wf {
            rows.push(EnvelopeRow {
                h: r.h,
                dt: r.dt,
                observable_error: r.abs_error,
                wavefunction_error: w.abs_error,
                envelope: r.abs_error.min(w.abs_error),
            });
        }
    }
    let mut dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    dts.sort_by(|a, b| b.partial_cmp(a).expect("finite dt"));
    dts.dedup();
    let worst_case: Vec<(f64, f64, f64)> = dts
        .iter()
        .map(|&dt| {
            rows.iter()
                .filter(|r| r.dt == dt)
                .fold((dt, f64::NAN, f64::NEG_INFINITY), |acc, r| {
                    if r.envelope > acc.2 {
                        (dt, r.h, r.envelope)
                    } else {
                        acc
                    }
                })
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = worst_case.iter().map(|w| (w.0, w.2)).unzip();
    EnvelopeTable {
        worst_case_fit: fit_loglog(&xs, &ys, 10.0 * noise_floor),
        rows,
        worst_case,
    }
}

impl RunConfig {
    fn validate_basics(&self) -> Result<()> {
        check_h(self.h)?;
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        potential_by_name(&self.potential_name)?;
        self.resolved_observables()?;
        Ok(())
    }
}

pub fn write_csv<W: Write>(mut out: W, records: &[ErrorRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn write_csv_file(path: &Path, records: &[ErrorRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_csv(&mut out, records)?;
    out.flush()?;
    Ok(())
}

/// Slope table written next to an error CSV.
pub fn write_fits<W: Write>(mut out: W, fits: &[MetricFit]) -> Result<()> {
    writeln!(out, "metric,slope,intercept,r_squared,points_used")?;
    for f in fits {
        match f.fit {
            Some(s) => writeln!(
                out,
                "{},{},{},{},{}",
                f.metric, s.slope, s.intercept, s.r_squared, s.points_used
            )?,
            None => writeln!(out, "{},,,,0", f.metric)?,
        }
    }
    Ok(())
}

/// Reproducibility record stored beside every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub code_version: String,
    pub timestamp_unix_seconds: u64,
    #[serde(default)]
    pub parameters: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let timestamp_unix_seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            config: config.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix_seconds,
            parameters: serde_json::Map::new(),
        }
    }

    pub fn with_parameter(mut self, key: &str, value: impl Serialize) -> Self {
        if let Ok(v) = serde_json::to_value(value) {
            self.parameters.insert(key.to_string(), v);
        }
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}

/// `<stem>.manifest.json` beside `path`.
pub fn sibling_path(path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    path.with_file_name(format!("{stem}{suffix}"))
}
