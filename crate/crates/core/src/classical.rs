//! The classical limit: Hamiltonian flow of `ξ²/2 + v²/2 + V(x, y)` on
//! `(x, ξ, y, v)`, its exact kinetic and potential sub-flows, and the
//! Störmer–Verlet composition that shadows the Strang splitting.

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::potentials::Potential;
use crate::propagator::NuclearState;

/// Finite-difference step for flow Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassicalPoint {
    pub x: f64,
    pub xi: f64,
    pub y: f64,
    pub v: f64,
}

impl ClassicalPoint {
    pub fn new(x: f64, xi: f64, y: f64, v: f64) -> Self {
        Self { x, xi, y, v }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.xi, self.y, self.v]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn max_abs_diff(&self, other: &ClassicalPoint) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HamiltonianValue {
    pub energy: f64,
}

pub fn classical_hamiltonian(p: &ClassicalPoint, potential: &dyn Potential) -> HamiltonianValue {
    HamiltonianValue {
        energy: 0.5 * (p.xi * p.xi + p.v * p.v) + potential.value(p.x, p.y),
    }
}

/// Free flight: positions advance, momenta fixed.
pub fn flow_t(p: &ClassicalPoint, dt: f64) -> ClassicalPoint {
    ClassicalPoint {
        x: p.x + p.xi * dt,
        y: p.y + p.v * dt,
        ..*p
    }
}

/// Kick: momenta change by the force at the frozen positions.
pub fn flow_v(p: &ClassicalPoint, dt: f64, potential: &dyn Potential) -> ClassicalPoint {
    let (gx, gy) = potential.gradient(p.x, p.y);
    ClassicalPoint {
        xi: p.xi - dt * gx,
        v: p.v - dt * gy,
        ..*p
    }
}

/// Kick–drift–kick.
pub fn stormer_verlet_step(p: &ClassicalPoint, dt: f64, potential: &dyn Potential) -> ClassicalPoint {
    let half = flow_v(p, 0.5 * dt, potential);
    let drift = flow_t(&half, dt);
    flow_v(&drift, 0.5 * dt, potential)
}

/// `n` Störmer–Verlet steps of size `dt`.
pub fn verlet_flow(p: &ClassicalPoint, dt: f64, n: usize, potential: &dyn Potential) -> ClassicalPoint {
    let mut q = *p;
    for _ in 0..n {
        q = stormer_verlet_step(&q, dt, potential);
    }
    q
}

/// Stand-in for the exact flow over time `t`: Störmer–Verlet with `n_fine`
/// substeps, accurate to `O((t / n_fine)²)`.
pub fn reference_flow(p: &ClassicalPoint, t: f64, potential: &dyn Potential, n_fine: usize) -> ClassicalPoint {
    if n_fine == 0 || t == 0.0 {
        return *p;
    }
    verlet_flow(p, t / n_fine as f64, n_fine, potential)
}

/// Substep count giving a reference step no larger than `max_dt`.
pub fn fine_steps(t: f64, max_dt: f64) -> usize {
    ((t.abs() / max_dt).ceil() as usize).max(1)
}

/// Central-difference Jacobian of `n` Störmer–Verlet steps at `p`, in the
/// variable order `(x, ξ, y, v)`.
pub fn jacobian_of_flow(p: &ClassicalPoint, dt: f64, n: usize, potential: &dyn Potential) -> Matrix4<f64> {
    let base = p.to_array();
    let mut jac = Matrix4::zeros();
    for col in 0..4 {
        let mut plus = base;
        let mut minus = base;
        plus[col] += JACOBIAN_STEP;
        minus[col] -= JACOBIAN_STEP;
        let fp = verlet_flow(&ClassicalPoint::from_array(plus), dt, n, potential).to_array();
        let fm = verlet_flow(&ClassicalPoint::from_array(minus), dt, n, potential).to_array();
        for row in 0..4 {
            jac[(row, col)] = (fp[row] - fm[row]) / (2.0 * JACOBIAN_STEP);
        }
    }
    jac
}

/// How the nuclear coordinate is shared among phase-space samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum NuclearCoupling {
    /// Every sample carries its own `(y, v)` and follows the four-dimensional
    /// Hamiltonian flow independently.
    PerPoint,
    /// One nucleus driven by the weighted mean of `∂_y V` over the samples,
    /// the particle form of the Liouville–Newton limit.
    #[default]
    MeanField,
}

/// Electronic phase-space samples transported together with the nucleus.
///
/// `force_weights` give each sample's share of the mean-field force; they
/// are ignored under [`NuclearCoupling::PerPoint`].
#[derive(Debug, Clone)]
pub struct PhaseEnsemble {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub force_weights: Vec<f64>,
    coupling: NuclearCoupling,
    nuclei: Vec<NuclearState>,
}

const CHUNK: usize = 4096;

impl PhaseEnsemble {
    pub fn new(
        x: Vec<f64>,
        xi: Vec<f64>,
        force_weights: Vec<f64>,
        nuclear: NuclearState,
        coupling: NuclearCoupling,
    ) -> Self {
        assert_eq!(x.len(), xi.len());
        assert_eq!(x.len(), force_weights.len());
        let nuclei = match coupling {
            NuclearCoupling::PerPoint => vec![nuclear; x.len()],
            NuclearCoupling::MeanField => vec![nuclear],
        };
        Self {
            x,
            xi,
            force_weights,
            coupling,
            nuclei,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn coupling(&self) -> NuclearCoupling {
        self.coupling
    }

    /// Nuclear state of sample `i` (the shared one under mean-field coupling).
    pub fn nuclear(&self, i: usize) -> NuclearState {
        match self.coupling {
            NuclearCoupling::PerPoint => self.nuclei[i],
            NuclearCoupling::MeanField => self.nuclei[0],
        }
    }

    pub fn point(&self, i: usize) -> ClassicalPoint {
        let n = self.nuclear(i);
        ClassicalPoint::new(self.x[i], self.xi[i], n.y, n.v)
    }

    fn kick(&mut self, tau: f64, potential: &dyn Potential) {
        match self.coupling {
            NuclearCoupling::MeanField => {
                let y = self.nuclei[0].y;
                let force: f64 = self
                    .x
                    .par_chunks(CHUNK)
                    .zip(self.xi.par_chunks_mut(CHUNK))
                    .zip(self.force_weights.par_chunks(CHUNK))
                    .map(|((xs, xis), ws)| {
                        let mut f = 0.0;
                        for ((x, xi), w) in xs.iter().zip(xis.iter_mut()).zip(ws) {
                            let (gx, gy) = potential.gradient(*x, y);
                            *xi -= tau * gx;
                            f += w * gy;
                        }
                        f
                    })
                    .sum();
                self.nuclei[0].v -= tau * force;
            }
            NuclearCoupling::PerPoint => {
                self.x
                    .par_chunks(CHUNK)
                    .zip(self.xi.par_chunks_mut(CHUNK))
                    .zip(self.nuclei.par_chunks_mut(CHUNK))
                    .for_each(|((xs, xis), ns)| {
                        for ((x, xi), n) in xs.iter().zip(xis.iter_mut()).zip(ns.iter_mut()) {
                            let (gx, gy) = potential.gradient(*x, n.y);
                            *xi -= tau * gx;
                            n.v -= tau * gy;
                        }
                    });
            }
        }
    }

    fn drift(&mut self, tau: f64) {
        self.x
            .par_chunks_mut(CHUNK)
            .zip(self.xi.par_chunks(CHUNK))
            .for_each(|(xs, xis)| {
                for (x, xi) in xs.iter_mut().zip(xis) {
                    *x += tau * xi;
                }
            });
        for n in &mut self.nuclei {
            n.y += tau * n.v;
        }
    }

    /// One kick–drift–kick step.
    pub fn verlet_step(&mut self, dt: f64, potential: &dyn Potential) {
        self.kick(0.5 * dt, potential);
        self.drift(dt);
        self.kick(0.5 * dt, potential);
    }

    /// `n` Störmer–Verlet steps of size `dt`, fusing the adjacent half kicks.
    pub fn verlet_steps(&mut self, dt: f64, n: usize, potential: &dyn Potential) {
        if n == 0 {
            return;
        }
        self.kick(0.5 * dt, potential);
        for step in 1..=n {
            self.drift(dt);
            let tau = if step == n { 0.5 * dt } else { dt };
            self.kick(tau, potential);
        }
    }
}
