//! Discrete Wigner and Husimi transforms of sampled wavefunctions and
//! phase-space quadrature against them.
//!
//! The Wigner correlation uses offsets that land exactly on grid nodes:
//! `y_m = 2 m Δx / h`, so `(h/2) y_m = m Δx`, with periodic wrap. The dual
//! momentum grid is `ξ_k = k Δξ` with `Δξ = π h / (n Δx)`, `k ∈ [-n/2, n/2)`.
//!
//! Lags are limited to `|m| < n/4`. On a circle every node pair has two
//! midpoints; keeping only pairs less than half a period apart assigns each
//! pair to its near midpoint and removes the antipodal ghost image.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcmdError, Result};
use crate::grid::{Grid, Spectral, WaveFunction};
use crate::observables::{expectation, observable_by_name, Factor, Observable};

/// Boundary-node density above which the periodic wrap in the Wigner
/// correlation is considered unsafe.
pub const WIGNER_BOUNDARY_THRESHOLD: f64 = 1e-8;

/// Husimi box resolution per axis.
pub const HUSIMI_BOX_NODES: usize = 128;

/// Husimi box half-width in standard deviations of the Husimi marginals.
pub const HUSIMI_BOX_HALF_WIDTH_SIGMAS: f64 = 6.0;

/// Coherent-state overlaps are truncated at this many `√h` from the center.
const COHERENT_CUTOFF_WIDTHS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Wigner,
    Husimi,
}

impl FieldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldKind::Wigner => "wigner",
            FieldKind::Husimi => "husimi",
        }
    }
}

/// Real function sampled on a tensor grid in `(x, ξ)`; `values` is row-major
/// with one row per `x` node.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceField {
    pub kind: FieldKind,
    pub h: f64,
    pub x_nodes: Vec<f64>,
    pub xi_nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// Quadrature cell in `x`.
    pub dx: f64,
    /// Quadrature cell in `ξ`.
    pub dxi: f64,
}

impl PhaseSpaceField {
    pub fn n_x(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn n_xi(&self) -> usize {
        self.xi_nodes.len()
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_xi() + k]
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dxi
    }

    /// `∬ field dx dξ`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Node of the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (self.x_nodes[idx / self.n_xi()], self.xi_nodes[idx % self.n_xi()])
    }

    /// `∫ field dξ` at every `x` node.
    pub fn x_marginal(&self) -> Vec<f64> {
        self.values
            .chunks(self.n_xi())
            .map(|row| row.iter().sum::<f64>() * self.dxi)
            .collect()
    }

    /// `∫ field dx` at every `ξ` node.
    pub fn xi_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_xi()];
        for row in self.values.chunks(self.n_xi()) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o *= self.dx);
        out
    }

    /// `√(∬ field² dx dξ)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_area()).sqrt()
    }

    /// Phase-space nodes flattened in row-major order.
    pub fn flat_nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(self.values.len());
        let mut xis = Vec::with_capacity(self.values.len());
        for &x in &self.x_nodes {
            for &xi in &self.xi_nodes {
                xs.push(x);
                xis.push(xi);
            }
        }
        (xs, xis)
    }

    /// `Σ f_i · field_i · dx dξ` for values `f` given at the flattened nodes.
    pub fn integrate_against(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.values.len());
        f.iter().zip(&self.values).map(|(a, w)| a * w).sum::<f64>() * self.cell_area()
    }

    /// Plain-text matrix format: a `#`-prefixed header (kind, h, cells, node
    /// vectors) followed by one whitespace-separated row per `x` node.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# kind {}", self.kind.as_str())?;
        writeln!(out, "# h {:e}", self.h)?;
        writeln!(out, "# dx {:e}", self.dx)?;
        writeln!(out, "# dxi {:e}", self.dxi)?;
        writeln!(out, "# x_nodes {}", join(&self.x_nodes))?;
        writeln!(out, "# xi_nodes {}", join(&self.xi_nodes))?;
        for row in self.values.chunks(self.n_xi().max(1)) {
            writeln!(out, "{}", join(row))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut kind = None;
        let (mut h, mut dx, mut dxi) = (None, None, None);
        let (mut x_nodes, mut xi_nodes) = (None, None);
        let mut values = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                let key = parts.next().unwrap_or("");
                let rest: Vec<&str> = parts.collect();
                match key {
                    "kind" => {
                        kind = Some(match rest.first().copied() {
                            Some("wigner") => FieldKind::Wigner,
                            Some("husimi") => FieldKind::Husimi,
                            other => return Err(invalid("kind", format!("{other:?}"))),
                        })
                    }
                    "h" => h = Some(parse_one(&rest, "h")?),
                    "dx" => dx = Some(parse_one(&rest, "dx")?),
                    "dxi" => dxi = Some(parse_one(&rest, "dxi")?),
                    "x_nodes" => x_nodes = Some(parse_all(&rest)?),
                    "xi_nodes" => xi_nodes = Some(parse_all(&rest)?),
                    _ => {}
                }
            } else {
                let parts: Vec<&str> = line.split_whitespace().collect();
                values.extend(parse_all(&parts)?);
            }
        }
        let missing = |name: &'static str| invalid(name, "missing from header");
        let field = PhaseSpaceField {
            kind: kind.ok_or_else(|| missing("kind"))?,
            h: h.ok_or_else(|| missing("h"))?,
            dx: dx.ok_or_else(|| missing("dx"))?,
            dxi: dxi.ok_or_else(|| missing("dxi"))?,
            x_nodes: x_nodes.ok_or_else(|| missing("x_nodes"))?,
            xi_nodes: xi_nodes.ok_or_else(|| missing("xi_nodes"))?,
            values,
        };
        let expected = field.n_x() * field.n_xi();
        if field.values.len() != expected {
            return Err(QcmdError::LengthMismatch {
                expected,
                found: field.values.len(),
            });
        }
        Ok(field)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_all(parts: &[&str]) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| invalid("value", format!("`{s}`: {e}"))))
        .collect()
}

fn parse_one(parts: &[&str], name: &'static str) -> Result<f64> {
    let v = parse_all(parts)?;
    v.first().copied().ok_or_else(|| invalid(name, "missing value"))
}

/// Index window of the Wigner output: rows by `x`, columns by `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WignerWindow {
    pub x: Option<(f64, f64)>,
    pub xi: Option<(f64, f64)>,
}

/// Momentum spacing of the discrete Wigner transform.
pub fn wigner_xi_spacing(grid: &Grid, h: f64) -> f64 {
    PI * h / (grid.n_points() as f64 * grid.spacing())
}

fn check_wigner_preconditions(psi: &WaveFunction) -> Result<()> {
    let n = psi.grid().n_points();
    let required = (32.0 / psi.h()).ceil() as usize;
    if n < required {
        return Err(QcmdError::GridTooCoarse {
            n_points: n,
            h: psi.h(),
            required,
        });
    }
    let density = psi.boundary_density();
    if density >= WIGNER_BOUNDARY_THRESHOLD {
        return Err(QcmdError::BoundaryMass {
            density,
            threshold: WIGNER_BOUNDARY_THRESHOLD,
        });
    }
    Ok(())
}

/// Full `n × n` discrete Wigner function.
pub fn wigner_transform(psi: &WaveFunction) -> Result<PhaseSpaceField> {
    wigner_transform_window(psi, WignerWindow::default())
}

/// Discrete Wigner function restricted to the nodes inside `window`.
pub fn wigner_transform_window(psi: &WaveFunction, window: WignerWindow) -> Result<PhaseSpaceField> {
    check_wigner_preconditions(psi)?;
    let grid = *psi.grid();
    let n = grid.n_points();
    let h = psi.h();
    let dx = grid.spacing();
    let dxi = wigner_xi_spacing(&grid, h);
    let dy = 2.0 * dx / h;
    let half = n as i64 / 2;
    let quarter = n as i64 / 4;

    let rows: Vec<usize> = (0..n)
        .filter(|&j| in_range(grid.node(j), window.x))
        .collect();
    // ξ columns in ascending order, k = -n/2 .. n/2-1
    let cols: Vec<i64> = (-half..half)
        .filter(|&k| in_range(k as f64 * dxi, window.xi))
        .collect();

    let spectral = Spectral::new(n);
    let values = psi.values();
    let scale = dy / (2.0 * PI);
    let row_values: Vec<Vec<f64>> = rows
        .par_iter()
        .map_init(
            || {
                (
                    vec![Complex64::default(); n],
                    vec![Complex64::default(); spectral.scratch_len()],
                )
            },
            |(buf, scratch), &j| {
                buf.fill(Complex64::default());
                for m in -quarter + 1..quarter {
                    let minus = (j as i64 - m).rem_euclid(n as i64) as usize;
                    let plus = (j as i64 + m).rem_euclid(n as i64) as usize;
                    buf[m.rem_euclid(n as i64) as usize] = values[minus] * values[plus].conj();
                }
                spectral.inverse_raw_with_scratch(buf, scratch);
                cols.iter()
                    .map(|&k| scale * buf[k.rem_euclid(n as i64) as usize].re)
                    .collect()
            },
        )
        .collect();

    Ok(PhaseSpaceField {
        kind: FieldKind::Wigner,
        h,
        x_nodes: rows.iter().map(|&j| grid.node(j)).collect(),
        xi_nodes: cols.iter().map(|&k| k as f64 * dxi).collect(),
        values: row_values.into_iter().flatten().collect(),
        dx,
        dxi,
    })
}

fn in_range(v: f64, range: Option<(f64, f64)>) -> bool {
    range.is_none_or(|(lo, hi)| v >= lo && v <= hi)
}

/// Minimal-uncertainty packet of width `√h` centered at `(x, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentState {
    pub center_x: f64,
    pub center_xi: f64,
    pub h: f64,
}

impl CoherentState {
    pub fn new(center_x: f64, center_xi: f64, h: f64) -> Self {
        Self {
            center_x,
            center_xi,
            h,
        }
    }

    pub fn amplitude(&self, y: f64) -> Complex64 {
        let d = y - self.center_x;
        let norm = (PI * self.h).powf(-0.25);
        Complex64::from_polar(norm * (-d * d / (2.0 * self.h)).exp(), self.center_xi * d / self.h)
    }

    pub fn sample(&self, grid: Grid) -> Result<WaveFunction> {
        WaveFunction::from_fn(grid, self.h, |y| self.amplitude(y))
    }

    /// `⟨g, ψ⟩` by the grid trapezoid rule.
    pub fn overlap(&self, psi: &WaveFunction) -> Complex64 {
        let (lo, hi) = coherent_support(psi.grid(), self.center_x, self.h);
        let grid = psi.grid();
        let values = psi.values();
        (lo..hi)
            .map(|j| self.amplitude(grid.node(j)).conj() * values[j])
            .sum::<Complex64>()
            * grid.spacing()
    }

    fn boundary_distance(&self, grid: &Grid) -> f64 {
        (self.center_x - grid.x_min()).min(grid.x_max() - self.center_x)
    }
}

fn coherent_support(grid: &Grid, center: f64, h: f64) -> (usize, usize) {
    let reach = COHERENT_CUTOFF_WIDTHS * h.sqrt();
    let dx = grid.spacing();
    let lo = ((center - reach - grid.x_min()) / dx).floor().max(0.0) as usize;
    let hi = (((center + reach - grid.x_min()) / dx).ceil() as usize + 1).min(grid.n_points());
    (lo.min(hi), hi)
}

/// Husimi function `(2πh)^{-1} |⟨g_{(x,ξ)}, ψ⟩|²` at the tensor nodes, which
/// must be uniformly spaced for the quadrature cell to make sense.
pub fn husimi_function(psi: &WaveFunction, x_nodes: &[f64], xi_nodes: &[f64]) -> Result<PhaseSpaceField> {
    if x_nodes.is_empty() || xi_nodes.is_empty() {
        return Err(invalid("nodes", "empty node vector"));
    }
    let h = psi.h();
    let grid = *psi.grid();
    let min_distance = 5.0 * h.sqrt();
    for &x in x_nodes {
        if CoherentState::new(x, 0.0, h).boundary_distance(&grid) < min_distance {
            log::warn!(
                "Husimi node x = {x} lies within 5√h of the boundary; truncated overlaps are inaccurate"
            );
            break;
        }
    }
    let values = psi.values();
    let dx = grid.spacing();
    let prefactor = (2.0 * PI * h).recip() * (PI * h).powf(-0.5) * dx * dx;
    let rows: Vec<Vec<f64>> = x_nodes
        .par_iter()
        .map(|&x| {
            let (lo, hi) = coherent_support(&grid, x, h);
            // envelope-weighted state and phase base shared by the whole row
            let weighted: Vec<Complex64> = (lo..hi)
                .map(|j| {
                    let d = grid.node(j) - x;
                    values[j] * (-d * d / (2.0 * h)).exp()
                })
                .collect();
            let d0 = grid.node(lo) - x;
            xi_nodes
                .iter()
                .map(|&xi| {
                    let step = Complex64::cis(-xi * dx / h);
                    let mut phase = Complex64::cis(-xi * d0 / h);
                    let mut acc = Complex64::default();
                    for w in &weighted {
                        acc += w * phase;
                        phase *= step;
                    }
                    prefactor * acc.norm_sqr()
                })
                .collect()
        })
        .collect();
    Ok(PhaseSpaceField {
        kind: FieldKind::Husimi,
        h,
        x_nodes: x_nodes.to_vec(),
        xi_nodes: xi_nodes.to_vec(),
        values: rows.into_iter().flatten().collect(),
        dx: uniform_spacing(x_nodes),
        dxi: uniform_spacing(xi_nodes),
    })
}

fn uniform_spacing(nodes: &[f64]) -> f64 {
    if nodes.len() < 2 {
        1.0
    } else {
        (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64
    }
}

/// `n` uniformly spaced nodes on `[center - half_width, center + half_width]`.
pub fn uniform_nodes(center: f64, half_width: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![center];
    }
    let step = 2.0 * half_width / (n - 1) as f64;
    (0..n).map(|i| center - half_width + i as f64 * step).collect()
}

/// Means and standard deviations of position and momentum under `ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketMoments {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_p: f64,
    pub std_p: f64,
}

pub fn packet_moments(psi: &WaveFunction) -> Result<PacketMoments> {
    let position = Observable::position_multiplier("x2", Factor::new(|x| x * x), false);
    let momentum = Observable::fourier_multiplier("p2", Factor::new(|p| p * p), false);
    let mean_x = expectation(&observable_by_name("position")?, psi)?;
    let mean_p = expectation(&observable_by_name("momentum")?, psi)?;
    let vx = (expectation(&position, psi)? - mean_x * mean_x).max(0.0);
    let vp = (expectation(&momentum, psi)? - mean_p * mean_p).max(0.0);
    Ok(PacketMoments {
        mean_x,
        std_x: vx.sqrt(),
        mean_p,
        std_p: vp.sqrt(),
    })
}

/// Default Husimi phase-space box for `ψ`: centered at `(⟨x̂⟩, ⟨p̂⟩)` with
/// half-widths of six standard deviations of the Husimi marginals
/// (`σ_H² = σ² + h/2` in each variable).
pub fn husimi_box(psi: &WaveFunction, nodes_per_axis: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = psi.h();
    let m = packet_moments(psi)?;
    let wx = HUSIMI_BOX_HALF_WIDTH_SIGMAS * (m.std_x.powi(2) + 0.5 * h).sqrt();
    let wp = HUSIMI_BOX_HALF_WIDTH_SIGMAS * (m.std_p.powi(2) + 0.5 * h).sqrt();
    Ok((
        uniform_nodes(m.mean_x, wx, nodes_per_axis),
        uniform_nodes(m.mean_p, wp, nodes_per_axis),
    ))
}

/// Husimi function on the default box.
pub fn husimi_on_default_box(psi: &WaveFunction) -> Result<PhaseSpaceField> {
    let (xs, xis) = husimi_box(psi, HUSIMI_BOX_NODES)?;
    husimi_function(psi, &xs, &xis)
}

/// `∬ f(x, ξ) w(x, ξ) dx dξ` on a Wigner field.
pub fn wigner_field_expectation(field: &PhaseSpaceField, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    let n_xi = field.n_xi();
    let sum: f64 = field
        .values
        .par_chunks(n_xi)
        .zip(field.x_nodes.par_iter())
        .map(|(row, &x)| {
            row.iter()
                .zip(&field.xi_nodes)
                .map(|(w, &xi)| f(x, xi) * w)
                .sum::<f64>()
        })
        .sum();
    sum * field.cell_area()
}

/// Tensor-grid quadrature of a transported symbol `a∘Φ` against a Wigner field.
pub fn wigner_expectation(
    pulled_back: impl Fn(f64, f64) -> f64 + Sync,
    field: &PhaseSpaceField,
) -> Result<f64> {
    if field.kind != FieldKind::Wigner {
        return Err(QcmdError::Unsupported("wigner_expectation needs a Wigner field".into()));
    }
    Ok(wigner_field_expectation(field, pulled_back))
}

/// `∬ (a∘Φ - (h/4) Δa∘Φ) σ dx dξ` on a Husimi field.
pub fn husimi_expectation(
    pulled_back: impl Fn(f64, f64) -> f64 + Sync,
    pulled_back_laplacian: impl Fn(f64, f64) -> f64 + Sync,
    field: &PhaseSpaceField,
    h: f64,
) -> Result<f64> {
    if field.kind != FieldKind::Husimi {
        return Err(QcmdError::Unsupported("husimi_expectation needs a Husimi field".into()));
    }
    let quarter_h = 0.25 * h;
    Ok(wigner_field_expectation(field, |x, xi| {
        pulled_back(x, xi) - quarter_h * pulled_back_laplacian(x, xi)
    }))
}
