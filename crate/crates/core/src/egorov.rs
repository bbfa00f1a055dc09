//! Semiclassical Egorov checks: quantum expectations of the coupled system
//! against phase-space averages of classically transported symbols.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{fine_steps, NuclearCoupling, PhaseEnsemble};
use crate::error::{QcmdError, Result};
use crate::experiments::{initial_state, ReferenceCache, RunConfig};
use crate::fit::{fit_loglog, SlopeFit};
use crate::grid::Spectral;
use crate::observables::{expectation_with, Observable};
use crate::phase_space::{
    husimi_on_default_box, packet_moments, wigner_transform_window, PhaseSpaceField, WignerWindow,
};
use crate::potentials::Potential;
use crate::propagator::{steps_for, NuclearState, Recording};

/// Verified absolute accuracy of the phase-space quadratures; defects below
/// ten times this value are left out of slope fits.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Half-width of the Wigner window in standard deviations of each marginal.
pub const WIGNER_WINDOW_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseSpacePath {
    Wigner,
    Husimi,
}

impl PhaseSpacePath {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseSpacePath::Wigner => "wigner",
            PhaseSpacePath::Husimi => "husimi",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "wigner" => Ok(PhaseSpacePath::Wigner),
            "husimi" => Ok(PhaseSpacePath::Husimi),
            other => Err(QcmdError::UnknownName {
                kind: "path",
                name: other.to_string(),
                available: "wigner, husimi".into(),
            }),
        }
    }
}

/// Classical-side settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgorovOptions {
    pub coupling: NuclearCoupling,
    /// Largest Störmer–Verlet step of the stand-in for the exact flow.
    pub classical_max_dt: f64,
    /// Phase-space step of the Laplacian stencil on the Husimi path.
    pub stencil_step: f64,
}

impl Default for EgorovOptions {
    fn default() -> Self {
        Self {
            coupling: NuclearCoupling::MeanField,
            classical_max_dt: 1e-4,
            stencil_step: 1e-4,
        }
    }
}

/// One `(h, path)` comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgorovCell {
    pub h: f64,
    pub quantum: f64,
    pub classical: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgorovReport {
    pub observable: String,
    pub path: PhaseSpacePath,
    pub t_final: f64,
    pub h_values: Vec<f64>,
    pub quantum_expectations: Vec<f64>,
    pub classical_expectations: Vec<f64>,
    pub defects: Vec<f64>,
    /// NaN when fewer than two defects clear the fit floor.
    pub fitted_slope: f64,
    pub fit: Option<SlopeFit>,
}

impl EgorovReport {
    pub fn from_cells(observable: &str, path: PhaseSpacePath, t_final: f64, cells: &[EgorovCell]) -> Self {
        let h_values: Vec<f64> = cells.iter().map(|c| c.h).collect();
        let defects: Vec<f64> = cells.iter().map(|c| c.defect).collect();
        let fit = fit_loglog(&h_values, &defects, 10.0 * QUADRATURE_TOLERANCE);
        Self {
            observable: observable.to_string(),
            path,
            t_final,
            quantum_expectations: cells.iter().map(|c| c.quantum).collect(),
            classical_expectations: cells.iter().map(|c| c.classical).collect(),
            fitted_slope: fit.map_or(f64::NAN, |f| f.slope),
            fit,
            h_values,
            defects,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "observable,path,h,T,quantum,classical,defect,fitted_slope")?;
        for i in 0..self.h_values.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.observable,
                self.path.as_str(),
                self.h_values[i],
                self.t_final,
                self.quantum_expectations[i],
                self.classical_expectations[i],
                self.defects[i],
                self.fitted_slope
            )?;
        }
        Ok(())
    }
}

/// Classical transport used on the phase-space side: `n` Störmer–Verlet
/// steps of size `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalFlow {
    pub dt: f64,
    pub n: usize,
}

impl ClassicalFlow {
    /// Fine-step stand-in for the exact flow up to time `t`.
    pub fn exact(t: f64, max_dt: f64) -> Self {
        let n = fine_steps(t, max_dt);
        Self {
            dt: if n == 0 { 0.0 } else { t / n as f64 },
            n,
        }
    }
}

fn require_schwartz(observable: &Observable) -> Result<()> {
    if observable.is_schwartz() {
        Ok(())
    } else {
        Err(QcmdError::NotSchwartz(observable.name().to_string()))
    }
}

/// Windowed Wigner function of `ψ` covering its bulk in phase space.
pub fn wigner_bulk(psi: &crate::grid::WaveFunction) -> Result<PhaseSpaceField> {
    let m = packet_moments(psi)?;
    let grid = psi.grid();
    let wx = (WIGNER_WINDOW_SIGMAS * m.std_x).max(4.0 * grid.spacing());
    let wp = (WIGNER_WINDOW_SIGMAS * m.std_p).max(4.0 * crate::phase_space::wigner_xi_spacing(grid, psi.h()));
    wigner_transform_window(
        psi,
        WignerWindow {
            x: Some((m.mean_x - wx, m.mean_x + wx)),
            xi: Some((m.mean_p - wp, m.mean_p + wp)),
        },
    )
}

/// `∬ a∘Φ w dx dξ` with every node of the Wigner field transported.
pub fn wigner_side(
    observable: &Observable,
    field: &PhaseSpaceField,
    nuclear: NuclearState,
    potential: &dyn Potential,
    flow: ClassicalFlow,
    coupling: NuclearCoupling,
) -> f64 {
    let (x, xi) = field.flat_nodes();
    let cell = field.cell_area();
    let weights: Vec<f64> = field.values.iter().map(|w| w * cell).collect();
    let mut ensemble = PhaseEnsemble::new(x, xi, weights.clone(), nuclear, coupling);
    ensemble.verlet_steps(flow.dt, flow.n, potential);
    ensemble
        .x
        .par_iter()
        .zip(ensemble.xi.par_iter())
        .zip(weights.par_iter())
        .map(|((&x, &xi), &w)| w * observable.symbol(x, xi))
        .sum()
}

/// `∬ (a∘Φ - (h/4) Δ(a∘Φ)) σ dx dξ`. Each node travels with its four stencil
/// neighbours at distance `δ` in `x` and `ξ`; the Laplacian of the pullback
/// comes from the transported stencil, and under mean-field coupling the
/// force weights carry the same `-(h/4)Δ` correction.
pub fn husimi_side(
    observable: &Observable,
    field: &PhaseSpaceField,
    nuclear: NuclearState,
    potential: &dyn Potential,
    flow: ClassicalFlow,
    coupling: NuclearCoupling,
    delta: f64,
) -> f64 {
    let h = field.h;
    let (x0, xi0) = field.flat_nodes();
    let cell = field.cell_area();
    let m = x0.len();
    let offsets = [(0.0, 0.0), (delta, 0.0), (-delta, 0.0), (0.0, delta), (0.0, -delta)];
    let mut x = Vec::with_capacity(5 * m);
    let mut xi = Vec::with_capacity(5 * m);
    let mut force = Vec::with_capacity(5 * m);
    let c = h / (delta * delta);
    for i in 0..m {
        let omega = field.values[i] * cell;
        for (s, (ox, oxi)) in offsets.iter().enumerate() {
            x.push(x0[i] + ox);
            xi.push(xi0[i] + oxi);
            force.push(if s == 0 { omega * (1.0 + c) } else { -0.25 * omega * c });
        }
    }
    let mut ensemble = PhaseEnsemble::new(x, xi, force, nuclear, coupling);
    ensemble.verlet_steps(flow.dt, flow.n, potential);
    let a: Vec<f64> = ensemble
        .x
        .par_iter()
        .zip(ensemble.xi.par_iter())
        .map(|(&x, &xi)| observable.symbol(x, xi))
        .collect();
    let quarter_h = 0.25 * h;
    (0..m)
        .into_par_iter()
        .map(|i| {
            let s = &a[5 * i..5 * i + 5];
            let laplacian = (s[1] + s[2] + s[3] + s[4] - 4.0 * s[0]) / (delta * delta);
            field.values[i] * cell * (s[0] - quarter_h * laplacian)
        })
        .sum()
}

fn classical_side(
    observable: &Observable,
    cfg: &RunConfig,
    h: f64,
    path: PhaseSpacePath,
    flow: ClassicalFlow,
    options: &EgorovOptions,
) -> Result<f64> {
    let c = cfg.with_h(h);
    let state0 = initial_state(&c)?;
    let potential = c.potential()?;
    Ok(match path {
        PhaseSpacePath::Wigner => {
            let field = wigner_bulk(&state0.psi)?;
            wigner_side(observable, &field, state0.nuclear, potential.as_ref(), flow, options.coupling)
        }
        PhaseSpacePath::Husimi => {
            let field = husimi_on_default_box(&state0.psi)?;
            husimi_side(
                observable,
                &field,
                state0.nuclear,
                potential.as_ref(),
                flow,
                options.coupling,
                options.stencil_step,
            )
        }
    })
}

/// `|⟨A⟩_{ψ(T)} - ∬ a∘Φ^T · w^h[ψ₀]|` (or its Husimi analogue), with `ψ(T)`
/// the cached fine-step reference run of `cfg` at semiclassical parameter `h`.
pub fn egorov_defect(
    observable: &Observable,
    cfg: &RunConfig,
    h: f64,
    t_final: f64,
    path: PhaseSpacePath,
    cache: &ReferenceCache,
    options: &EgorovOptions,
) -> Result<EgorovCell> {
    require_schwartz(observable)?;
    if !(0.0..=1.0).contains(&t_final) {
        return Err(crate::error::invalid("T", format!("{t_final} outside [0, 1]")));
    }
    let c = RunConfig {
        h,
        t_final,
        ..cfg.clone()
    };
    let psi_t = if t_final == 0.0 {
        initial_state(&c)?.psi
    } else {
        cache.reference(&c)?.state.psi.clone()
    };
    let quantum = expectation_with(observable, &psi_t, &Spectral::new(psi_t.grid().n_points()))?;
    let flow = ClassicalFlow::exact(t_final, options.classical_max_dt);
    let classical = classical_side(observable, &c, h, path, flow, options)?;
    Ok(EgorovCell {
        h,
        quantum,
        classical,
        defect: (quantum - classical).abs(),
    })
}

/// Discrete counterpart: `|⟨A⟩_{ψ_n} - ∬ a∘(Φ_SV^{dt})^n · w^h[ψ₀]|` with `ψ_n`
/// from `n` Strang steps of size `dt`, the same step on both sides.
pub fn splitting_identity_check(
    observable: &Observable,
    cfg: &RunConfig,
    h: f64,
    dt: f64,
    n: usize,
    options: &EgorovOptions,
) -> Result<EgorovCell> {
    require_schwartz(observable)?;
    let c = RunConfig {
        h,
        dt,
        t_final: dt * n as f64,
        ..cfg.clone()
    };
    let mut prop = c.propagator()?;
    let state0 = initial_state(&c)?;
    let psi_n = prop
        .evolve(state0, n, c.t_final, Recording::Endpoints)
        .into_last()
        .psi;
    let quantum = expectation_with(observable, &psi_n, &Spectral::new(psi_n.grid().n_points()))?;
    let classical = classical_side(observable, &c, h, PhaseSpacePath::Wigner, ClassicalFlow { dt, n }, options)?;
    Ok(EgorovCell {
        h,
        quantum,
        classical,
        defect: (quantum - classical).abs(),
    })
}

/// Egorov defects over `h_list`, cells run on `cfg.workers` threads.
pub fn egorov_sweep(
    observable: &Observable,
    cfg: &RunConfig,
    h_list: &[f64],
    t_final: f64,
    path: PhaseSpacePath,
    cache: &ReferenceCache,
    options: &EgorovOptions,
) -> Result<EgorovReport> {
    require_schwartz(observable)?;
    let cells = run_cells(cfg.workers, h_list, |h| {
        egorov_defect(observable, cfg, h, t_final, path, cache, options)
    })?;
    Ok(EgorovReport::from_cells(observable.name(), path, t_final, &cells))
}

/// Discrete Egorov defects over `h_list` at a fixed `(dt, n)`.
pub fn splitting_sweep(
    observable: &Observable,
    cfg: &RunConfig,
    h_list: &[f64],
    dt: f64,
    n: usize,
    options: &EgorovOptions,
) -> Result<EgorovReport> {
    require_schwartz(observable)?;
    steps_for(dt, dt * n as f64)?;
    let cells = run_cells(cfg.workers, h_list, |h| {
        splitting_identity_check(observable, cfg, h, dt, n, options)
    })?;
    Ok(EgorovReport::from_cells(
        observable.name(),
        PhaseSpacePath::Wigner,
        dt * n as f64,
        &cells,
    ))
}

fn run_cells(workers: usize, h_list: &[f64], cell: impl Fn(f64) -> Result<EgorovCell> + Sync) -> Result<Vec<EgorovCell>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QcmdError::Unsupported(format!("cannot start worker pool: {e}")))?;
    pool.install(|| h_list.par_iter().map(|&h| cell(h)).collect())
}
