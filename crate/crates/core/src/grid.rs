//! Periodic one-dimensional grids, sampled wavefunctions and the spectral
//! primitives (wavenumbers, unitary DFT, periodic trapezoid rule) shared by
//! the propagators and the phase-space transforms.

use std::f64::consts::PI;
use std::iter::Sum;
use std::ops::Mul;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, QcmdError, Result};

/// Largest grid `make_grid` will build unless told otherwise.
pub const DEFAULT_MAX_POINTS: usize = 1 << 22;

/// Points per semiclassical wavelength used by the reference experiments.
pub const DEFAULT_POINTS_PER_H: usize = 32;

/// Uniform periodic grid on `[x_min, x_max)`; the right endpoint is identified
/// with the left one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(invalid("domain", format!("[{x_min}, {x_max}] is not a valid interval")));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(invalid(
                "n_points",
                format!("{n_points} must be a power of two and at least 8"),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    /// Grid on the standard domain `[-π, π)`.
    pub fn symmetric(n_points: usize) -> Result<Self> {
        Self::new(-PI, PI, n_points)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }
}

/// Smallest power-of-two grid on `[-π, π)` resolving `h` with at least
/// `min_points_per_h` points per `2πh`.
pub fn make_grid(h: f64, min_points_per_h: usize) -> Result<Grid> {
    make_grid_capped(h, min_points_per_h, DEFAULT_MAX_POINTS)
}

pub fn make_grid_capped(h: f64, min_points_per_h: usize, max_points: usize) -> Result<Grid> {
    check_h(h)?;
    if min_points_per_h < 8 {
        return Err(invalid("min_points_per_h", format!("{min_points_per_h} < 8")));
    }
    let required = (min_points_per_h as f64 / h).ceil();
    if !required.is_finite() || required > max_points as f64 {
        return Err(QcmdError::ResolutionTooFine {
            requested: if required.is_finite() { required as usize } else { usize::MAX },
            cap: max_points,
        });
    }
    let n = (required as usize).max(8).next_power_of_two();
    if n > max_points {
        return Err(QcmdError::ResolutionTooFine {
            requested: n,
            cap: max_points,
        });
    }
    Grid::symmetric(n)
}

pub(crate) fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(invalid("h", format!("{h} is outside (0, 1]")));
    }
    Ok(())
}

/// Angular wavenumbers in DFT order: `0, 1, …, n/2-1, -n/2, …, -1`, scaled by
/// `2π / (x_max - x_min)`.
pub fn fourier_modes(grid: &Grid) -> Vec<f64> {
    let n = grid.n_points() as i64;
    let scale = 2.0 * PI / grid.length();
    (0..n)
        .map(|m| {
            let k = if m < n / 2 { m } else { m - n };
            k as f64 * scale
        })
        .collect()
}

/// Periodic trapezoid rule `spacing · Σ f_j`.
pub fn quadrature<T>(f: &[T], grid: &Grid) -> T
where
    T: Copy + Sum<T> + Mul<f64, Output = T>,
{
    debug_assert_eq!(f.len(), grid.n_points());
    f.iter().copied().sum::<T>() * grid.spacing()
}

/// Electronic state sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
    h: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>, h: f64) -> Result<Self> {
        check_h(h)?;
        if values.len() != grid.n_points() {
            return Err(QcmdError::LengthMismatch {
                expected: grid.n_points(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values, h })
    }

    pub fn from_fn(grid: Grid, h: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values, h)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn mass(&self) -> f64 {
        mass(self)
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-12
    }

    /// Rescales to unit mass. A zero state is left untouched.
    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            let s = m.sqrt().recip();
            self.values.iter_mut().for_each(|c| *c *= s);
        }
    }

    /// Errors when the mass is further than `tolerance` from one.
    pub fn require_normalized(&self, tolerance: f64) -> Result<()> {
        let m = self.mass();
        if (m - 1.0).abs() > tolerance {
            return Err(QcmdError::NotNormalized {
                mass: m,
                tolerance,
            });
        }
        Ok(())
    }

    /// `(Δx)^{1/2} ‖self - other‖₂`, the discrete L² distance.
    pub fn l2_distance(&self, other: &WaveFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (sum * self.grid.spacing()).sqrt()
    }

    /// Largest of the two end-node densities, used to detect packets reaching
    /// the periodic boundary.
    pub fn boundary_density(&self) -> f64 {
        let first = self.values[0].norm_sqr();
        let last = self.values[self.values.len() - 1].norm_sqr();
        first.max(last)
    }
}

/// `spacing · Σ |ψ_j|²`.
pub fn mass(psi: &WaveFunction) -> f64 {
    psi.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * psi.grid.spacing()
}

/// Planned forward/inverse DFT pair of one size.
///
/// `forward` is unnormalized, `inverse` divides by `n`, so the pair composes to
/// the identity. `unitary_coefficients` returns the `n^{-1/2}`-scaled spectrum.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    pub fn forward_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(data, scratch);
    }

    /// Unnormalized inverse transform.
    pub fn inverse_raw_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, scratch);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let s = (self.n as f64).recip();
        data.iter_mut().for_each(|c| *c *= s);
    }

    /// Unnormalized inverse transform, `Σ_m c_m e^{+2πi km/n}`.
    pub fn inverse_raw(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
    }

    pub fn unitary_coefficients(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.forward(&mut data);
        let s = (self.n as f64).sqrt().recip();
        data.iter_mut().for_each(|c| *c *= s);
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_sizes_round_up_to_powers_of_two() {
        assert_eq!(make_grid(0.04, 32).unwrap().n_points(), 1024);
        assert_eq!(make_grid(1.0, 32).unwrap().n_points(), 32);
        assert_eq!(make_grid(2f64.powi(-10), 32).unwrap().n_points(), 32768);
        let g = make_grid(0.04, 32).unwrap();
        assert!(g.spacing() <= 2.0 * PI * 0.04 / 32.0);
        assert_abs_diff_eq!(g.spacing() * g.n_points() as f64, 2.0 * PI, epsilon = 1e-14);
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(make_grid(0.0, 32).is_err());
        assert!(make_grid(1.5, 32).is_err());
        assert!(make_grid(0.5, 4).is_err());
        assert!(matches!(
            make_grid_capped(2f64.powi(-12), 32, 1 << 16),
            Err(QcmdError::ResolutionTooFine { .. })
        ));
        assert!(Grid::symmetric(12).is_err());
        assert!(Grid::symmetric(4).is_err());
    }

    #[test]
    fn wavenumbers_follow_dft_layout() {
        let g = Grid::symmetric(8).unwrap();
        assert_eq!(
            fourier_modes(&g),
            vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]
        );
        let g = Grid::new(0.0, 2.0 * PI, 8).unwrap();
        assert_eq!(fourier_modes(&g)[..2], [0.0, 1.0]);
        let g = Grid::symmetric(1024).unwrap();
        assert_eq!(fourier_modes(&g)[512], -512.0);
        let g = Grid::new(0.0, PI, 8).unwrap();
        assert_eq!(fourier_modes(&g)[1], 2.0);
    }

    #[test]
    fn trapezoid_on_periodic_data() {
        let g = Grid::symmetric(16).unwrap();
        let ones = vec![1.0; 16];
        assert_abs_diff_eq!(quadrature(&ones, &g), 2.0 * PI, epsilon = 1e-14);
        let s: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        assert_abs_diff_eq!(quadrature(&s, &g), 0.0, epsilon = 1e-14);
        let c2: Vec<f64> = g.nodes().iter().map(|x| x.cos().powi(2)).collect();
        assert_abs_diff_eq!(quadrature(&c2, &g), PI, epsilon = 1e-13);
        let z: Vec<Complex64> = g.nodes().iter().map(|x| Complex64::cis(*x)).collect();
        assert!(quadrature(&z, &g).norm() < 1e-14);
    }

    #[test]
    fn mass_of_uniform_and_zero_states() {
        let g = Grid::symmetric(64).unwrap();
        let c = (2.0 * PI).sqrt().recip();
        let psi = WaveFunction::from_fn(g, 0.5, |_| Complex64::new(c, 0.0)).unwrap();
        assert_abs_diff_eq!(psi.mass(), 1.0, epsilon = 1e-14);
        let zero = WaveFunction::new(g, vec![Complex64::default(); 64], 0.5).unwrap();
        assert_eq!(zero.mass(), 0.0);
        assert!(WaveFunction::new(g, vec![Complex64::default(); 63], 0.5).is_err());
    }

    #[test]
    fn normalize_gives_unit_mass() {
        let g = Grid::symmetric(256).unwrap();
        let mut psi = WaveFunction::from_fn(g, 0.1, |x| {
            Complex64::new(-12.5 * (x + 1.0).powi(2), 50.0 * (x + 1.0)).exp()
        })
        .unwrap();
        psi.normalize();
        assert!(psi.is_normalized());
        assert!(psi.require_normalized(1e-12).is_ok());
    }
}
