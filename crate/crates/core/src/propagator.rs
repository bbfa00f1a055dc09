//! Time splitting for the coupled electron–nucleus system.
//!
//! The kinetic sub-flow is diagonal in Fourier space and moves the nucleus
//! ballistically. The potential sub-flow is a pointwise phase and kicks the
//! nucleus with the Ehrenfest force; `|ψ|²` is frozen along it, so both flows
//! are solved exactly.

use num_complex::Complex64;

use crate::error::{QcmdError, Result};
use crate::grid::{fourier_modes, Grid, Spectral, WaveFunction};
use crate::potentials::SharedPotential;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearState {
    pub y: f64,
    pub v: f64,
}

impl NuclearState {
    pub fn new(y: f64, v: f64) -> Self {
        Self { y, v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcmdState {
    pub psi: WaveFunction,
    pub nuclear: NuclearState,
    pub time: f64,
}

impl QcmdState {
    pub fn new(psi: WaveFunction, nuclear: NuclearState) -> Self {
        Self {
            psi,
            nuclear,
            time: 0.0,
        }
    }
}

/// Number of steps of size `dt` that exactly reach `t_final`.
pub fn steps_for(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(QcmdError::IncommensurateStep { dt, t_final });
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(QcmdError::IncommensurateStep { dt, t_final });
    }
    Ok(n as usize)
}

/// Which states `evolve` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    /// Initial and final state only.
    Endpoints,
    /// Every `stride`-th state plus the final one.
    Every(usize),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<QcmdState>,
}

impl Trajectory {
    pub fn initial(&self) -> &QcmdState {
        &self.states[0]
    }

    pub fn last(&self) -> &QcmdState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn into_last(mut self) -> QcmdState {
        self.states.pop().expect("trajectory always holds the initial state")
    }
}

/// Split-step engine bound to one grid, one `h` and one potential.
///
/// Holds FFT plans, scratch space and the last kinetic multiplier, so steps
/// take `&mut self`; use one propagator per worker.
pub struct Propagator {
    grid: Grid,
    h: f64,
    potential: SharedPotential,
    spectral: Spectral,
    wavenumbers: Vec<f64>,
    nodes: Vec<f64>,
    scratch: Vec<Complex64>,
    kinetic: Option<(f64, Vec<Complex64>)>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", &self.grid)
            .field("h", &self.h)
            .field("potential", &self.potential.name())
            .finish()
    }
}

impl Propagator {
    pub fn new(grid: Grid, h: f64, potential: SharedPotential) -> Self {
        let spectral = Spectral::new(grid.n_points());
        let scratch = vec![Complex64::default(); spectral.scratch_len()];
        Self {
            wavenumbers: fourier_modes(&grid),
            nodes: grid.nodes(),
            grid,
            h,
            potential,
            spectral,
            scratch,
            kinetic: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn potential(&self) -> &SharedPotential {
        &self.potential
    }

    fn check_state(&self, state: &QcmdState) {
        assert_eq!(state.psi.grid(), &self.grid, "state lives on a different grid");
        assert_eq!(state.psi.h(), self.h, "state carries a different h");
    }

    /// `ψ ← e^{i h dt Δ/2} ψ`, `y ← y + v dt`. Does not touch `time`.
    pub fn kinetic_step(&mut self, state: &mut QcmdState, dt: f64) {
        self.check_state(state);
        if dt == 0.0 {
            return;
        }
        let needs_plan = !matches!(&self.kinetic, Some((cached, _)) if *cached == dt);
        if needs_plan {
            let scale = (self.grid.n_points() as f64).recip();
            let half_h_dt = 0.5 * self.h * dt;
            let multiplier = self
                .wavenumbers
                .iter()
                .map(|k| Complex64::from_polar(scale, -half_h_dt * k * k))
                .collect();
            self.kinetic = Some((dt, multiplier));
        }
        let multiplier = &self.kinetic.as_ref().expect("planned above").1;
        let values = state.psi.values_mut();
        self.spectral.forward_with_scratch(values, &mut self.scratch);
        values
            .iter_mut()
            .zip(multiplier)
            .for_each(|(c, m)| *c *= m);
        self.spectral.inverse_raw_with_scratch(values, &mut self.scratch);
        state.nuclear.y += state.nuclear.v * dt;
    }

    /// `ψ ← e^{-i dt V(x, y)/h} ψ`, `v ← v - dt ∫ ∂_y V |ψ|²`. Does not touch
    /// `time`.
    pub fn potential_step(&mut self, state: &mut QcmdState, dt: f64) {
        self.check_state(state);
        if dt == 0.0 {
            return;
        }
        let y = state.nuclear.y;
        let phase_scale = -dt / self.h;
        let potential = &*self.potential;
        let mut force = 0.0;
        for (c, &x) in state.psi.values_mut().iter_mut().zip(&self.nodes) {
            let (value, grad_y) = potential.value_and_grad_y(x, y);
            force += grad_y * c.norm_sqr();
            let (s, co) = (phase_scale * value).sin_cos();
            *c *= Complex64::new(co, s);
        }
        state.nuclear.v -= dt * force * self.grid.spacing();
    }

    /// Half potential step, full kinetic step, half potential step.
    pub fn strang_step(&mut self, state: &mut QcmdState, dt: f64) {
        self.potential_step(state, 0.5 * dt);
        self.kinetic_step(state, dt);
        self.potential_step(state, 0.5 * dt);
        state.time += dt;
    }

    /// Kinetic step followed by potential step (first order).
    pub fn lie_step(&mut self, state: &mut QcmdState, dt: f64) {
        self.kinetic_step(state, dt);
        self.potential_step(state, dt);
        state.time += dt;
    }

    /// `n_steps` Strang steps of size `t_final / n_steps`.
    ///
    /// Adjacent half kicks between unrecorded steps are fused into one full
    /// kick; `|ψ|²` and `y` coincide at the seam so this is the same map.
    pub fn evolve(
        &mut self,
        state0: QcmdState,
        n_steps: usize,
        t_final: f64,
        recording: Recording,
    ) -> Trajectory {
        let t0 = state0.time;
        let mut states = vec![state0];
        if n_steps == 0 {
            return Trajectory { states };
        }
        let dt = t_final / n_steps as f64;
        let stride = match recording {
            Recording::Endpoints => usize::MAX,
            Recording::Every(s) => s.max(1),
        };
        let mut state = states[0].clone();
        self.potential_step(&mut state, 0.5 * dt);
        for step in 1..=n_steps {
            self.kinetic_step(&mut state, dt);
            state.time = t0 + step as f64 * dt;
            if step == n_steps || step % stride == 0 {
                self.potential_step(&mut state, 0.5 * dt);
                states.push(state.clone());
                if step < n_steps {
                    self.potential_step(&mut state, 0.5 * dt);
                }
            } else {
                self.potential_step(&mut state, dt);
            }
        }
        Trajectory { states }
    }

    /// `evolve` with a step size that must divide `t_final`.
    pub fn evolve_with_step(
        &mut self,
        state0: QcmdState,
        dt: f64,
        t_final: f64,
        recording: Recording,
    ) -> Result<Trajectory> {
        let n = steps_for(dt, t_final)?;
        Ok(self.evolve(state0, n, t_final, recording))
    }

    /// Like `evolve_with_step` but with Lie steps; used for order checks.
    pub fn evolve_lie(&mut self, mut state: QcmdState, dt: f64, t_final: f64) -> Result<QcmdState> {
        let n = steps_for(dt, t_final)?;
        let dt = t_final / n as f64;
        for _ in 0..n {
            self.lie_step(&mut state, dt);
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{ConstantForce, NuclearHarmonic, SinQuadratic, Zero};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn plane_wave(grid: Grid, h: f64, k: f64) -> WaveFunction {
        let c = (2.0 * PI).sqrt().recip();
        WaveFunction::from_fn(grid, h, |x| Complex64::from_polar(c, k * x)).unwrap()
    }

    fn packet(grid: Grid, h: f64) -> WaveFunction {
        let mut psi = WaveFunction::from_fn(grid, h, |x| {
            Complex64::new(-12.5 * (x + 1.0).powi(2), 50.0 * (x + 1.0)).exp()
        })
        .unwrap();
        psi.normalize();
        psi
    }

    fn max_diff(a: &WaveFunction, b: &WaveFunction) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn steps_for_requires_commensurate_times() {
        assert_eq!(steps_for(1e-5, 0.5).unwrap(), 50_000);
        assert_eq!(steps_for(2f64.powi(-11), 0.5).unwrap(), 1024);
        assert_eq!(steps_for(0.001, 0.0).unwrap(), 0);
        assert!(steps_for(0.3, 0.5).is_err());
        assert!(steps_for(0.0, 0.5).is_err());
    }

    #[test]
    fn zero_step_is_identity() {
        let grid = Grid::symmetric(128).unwrap();
        let mut prop = Propagator::new(grid, 0.1, Arc::new(SinQuadratic));
        let s0 = QcmdState::new(packet(grid, 0.1), NuclearState::new(1.0, 0.5));
        let mut s = s0.clone();
        prop.kinetic_step(&mut s, 0.0);
        prop.potential_step(&mut s, 0.0);
        assert_eq!(s, s0);
    }

    #[test]
    fn plane_wave_picks_up_kinetic_phase() {
        let grid = Grid::symmetric(64).unwrap();
        let (h, dt, k) = (0.3, 0.17, 5.0);
        let mut prop = Propagator::new(grid, h, Arc::new(Zero));
        let mut s = QcmdState::new(plane_wave(grid, h, k), NuclearState::new(0.2, -1.5));
        prop.kinetic_step(&mut s, dt);
        let phase = Complex64::cis(-0.5 * h * dt * k * k);
        let expected = plane_wave(grid, h, k);
        for (a, b) in s.psi.values().iter().zip(expected.values()) {
            assert!((a - b * phase).norm() < 1e-13);
        }
        assert_abs_diff_eq!(s.nuclear.y, 0.2 - 1.5 * dt, epsilon = 1e-15);
        assert_eq!(s.nuclear.v, -1.5);
    }

    #[test]
    fn potential_step_keeps_moduli() {
        let grid = Grid::symmetric(256).unwrap();
        let mut prop = Propagator::new(grid, 0.05, Arc::new(SinQuadratic));
        let s0 = QcmdState::new(packet(grid, 0.05), NuclearState::new(1.0, 0.0));
        let mut s = s0.clone();
        prop.potential_step(&mut s, 0.37);
        for (a, b) in s.psi.values().iter().zip(s0.psi.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15);
        }
        assert_eq!(s.nuclear.y, 1.0);
    }

    #[test]
    fn x_independent_potential_is_a_global_phase_and_kick() {
        let grid = Grid::symmetric(128).unwrap();
        let (h, dt, y) = (0.2, 0.3, 0.8);
        let mut prop = Propagator::new(grid, h, Arc::new(NuclearHarmonic));
        let s0 = QcmdState::new(packet(grid, h), NuclearState::new(y, 0.4));
        let mut s = s0.clone();
        prop.potential_step(&mut s, dt);
        assert_abs_diff_eq!(s.nuclear.v, 0.4 - dt * y, epsilon = 1e-14);
        let phase = Complex64::cis(-dt * y * y / (2.0 * h));
        for (a, b) in s.psi.values().iter().zip(s0.psi.values()) {
            assert!((a - b * phase).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_potential_strang_and_lie_reduce_to_kinetic() {
        let grid = Grid::symmetric(128).unwrap();
        let mut prop = Propagator::new(grid, 0.1, Arc::new(Zero));
        let s0 = QcmdState::new(packet(grid, 0.1), NuclearState::new(1.0, 0.3));
        let mut kin = s0.clone();
        prop.kinetic_step(&mut kin, 0.05);
        let mut strang = s0.clone();
        prop.strang_step(&mut strang, 0.05);
        let mut lie = s0.clone();
        prop.lie_step(&mut lie, 0.05);
        assert!(max_diff(&kin.psi, &strang.psi) < 1e-15);
        assert!(max_diff(&kin.psi, &lie.psi) < 1e-15);
        assert_eq!(strang.nuclear, kin.nuclear);
        assert_eq!(strang.time, 0.05);
    }

    #[test]
    fn strang_and_lie_conserve_mass() {
        let grid = Grid::symmetric(512).unwrap();
        let mut prop = Propagator::new(grid, 0.04, Arc::new(SinQuadratic));
        let mut s = QcmdState::new(packet(grid, 0.04), NuclearState::new(1.0, 0.0));
        for _ in 0..20 {
            prop.strang_step(&mut s, 0.01);
            assert!((s.psi.mass() - 1.0).abs() < 1e-12);
            prop.lie_step(&mut s, 0.01);
            assert!((s.psi.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn strang_local_defect_is_third_order() {
        let grid = Grid::symmetric(512).unwrap();
        let h = 0.04;
        let mut prop = Propagator::new(grid, h, Arc::new(SinQuadratic));
        let s0 = QcmdState::new(packet(grid, h), NuclearState::new(1.0, 0.0));
        let defect = |prop: &mut Propagator, dt: f64| {
            let mut one = s0.clone();
            prop.strang_step(&mut one, dt);
            let mut two = s0.clone();
            prop.strang_step(&mut two, 0.5 * dt);
            prop.strang_step(&mut two, 0.5 * dt);
            one.psi.l2_distance(&two.psi)
        };
        let d1 = defect(&mut prop, 2f64.powi(-9));
        let d2 = defect(&mut prop, 2f64.powi(-10));
        let ratio = d1 / d2;
        assert!((6.5..9.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn evolve_fused_kicks_match_plain_steps() {
        let grid = Grid::symmetric(256).unwrap();
        let h = 0.05;
        let mut prop = Propagator::new(grid, h, Arc::new(SinQuadratic));
        let s0 = QcmdState::new(packet(grid, h), NuclearState::new(1.0, 0.0));
        let traj = prop.evolve(s0.clone(), 40, 0.2, Recording::Every(10));
        assert_eq!(traj.states.len(), 5);
        let mut plain = s0.clone();
        for _ in 0..40 {
            prop.strang_step(&mut plain, 0.005);
        }
        let last = traj.last();
        assert!(max_diff(&last.psi, &plain.psi) < 1e-12);
        assert_abs_diff_eq!(last.nuclear.y, plain.nuclear.y, epsilon = 1e-13);
        assert_abs_diff_eq!(last.nuclear.v, plain.nuclear.v, epsilon = 1e-13);
        assert_abs_diff_eq!(last.time, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(traj.states[2].time, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn evolve_zero_steps_and_free_flow() {
        let grid = Grid::symmetric(64).unwrap();
        let (h, k, t) = (0.25, 3.0, 0.75);
        let mut prop = Propagator::new(grid, h, Arc::new(Zero));
        let s0 = QcmdState::new(plane_wave(grid, h, k), NuclearState::new(0.5, 2.0));
        let traj = prop.evolve(s0.clone(), 0, 0.0, Recording::Endpoints);
        assert_eq!(traj.states.len(), 1);
        let end = prop
            .evolve_with_step(s0.clone(), 0.05, t, Recording::Endpoints)
            .unwrap()
            .into_last();
        let phase = Complex64::cis(-0.5 * h * t * k * k);
        for (a, b) in end.psi.values().iter().zip(s0.psi.values()) {
            assert!((a - b * phase).norm() < 1e-12);
        }
        assert_abs_diff_eq!(end.nuclear.y, 0.5 + 2.0 * t, epsilon = 1e-13);
        assert!(prop
            .evolve_with_step(s0, 0.07, 0.5, Recording::Endpoints)
            .is_err());
    }

    #[test]
    fn constant_force_nucleus_is_exact() {
        let grid = Grid::symmetric(64).unwrap();
        let c = 0.8;
        let mut prop = Propagator::new(grid, 0.5, Arc::new(ConstantForce { strength: c }));
        let s0 = QcmdState::new(packet(grid, 0.5), NuclearState::new(1.0, 0.25));
        let t = 1.3;
        let end = prop
            .evolve_with_step(s0, 0.1, t, Recording::Endpoints)
            .unwrap()
            .into_last();
        assert_abs_diff_eq!(end.nuclear.v, 0.25 - c * t, epsilon = 1e-13);
        assert_abs_diff_eq!(end.nuclear.y, 1.0 + 0.25 * t - 0.5 * c * t * t, epsilon = 1e-13);
    }
}
