//! Interaction potentials `V(x, y)` between the electronic coordinate `x` and
//! the nuclear coordinate `y`, with analytic first derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{QcmdError, Result};
use crate::grid::WaveFunction;

pub trait Potential: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn value(&self, x: f64, y: f64) -> f64;

    fn grad_x(&self, x: f64, y: f64) -> f64;

    fn grad_y(&self, x: f64, y: f64) -> f64;

    /// Whether every derivative of order two and higher is bounded.
    fn bounded_higher_derivatives(&self) -> bool;

    /// `(V, ∂_y V)` at one point; override when the two share work.
    fn value_and_grad_y(&self, x: f64, y: f64) -> (f64, f64) {
        (self.value(x, y), self.grad_y(x, y))
    }

    /// `(∂_x V, ∂_y V)` at one point.
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (self.grad_x(x, y), self.grad_y(x, y))
    }
}

pub type SharedPotential = Arc<dyn Potential>;

/// `V(x, y) = sin(x² + y²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SinQuadratic;

impl Potential for SinQuadratic {
    fn name(&self) -> &str {
        "sin_x2_y2"
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        (x * x + y * y).sin()
    }

    fn grad_x(&self, x: f64, y: f64) -> f64 {
        2.0 * x * (x * x + y * y).cos()
    }

    fn grad_y(&self, x: f64, y: f64) -> f64 {
        2.0 * y * (x * x + y * y).cos()
    }

    fn bounded_higher_derivatives(&self) -> bool {
        // Second derivatives grow like x² on the real line; bounded on the
        // computational domain only.
        false
    }

    fn value_and_grad_y(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = (x * x + y * y).sin_cos();
        (s, 2.0 * y * c)
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let c = (x * x + y * y).cos();
        (2.0 * x * c, 2.0 * y * c)
    }
}

/// `V(x, y) = x²/2 + y²/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Harmonic;

impl Potential for Harmonic {
    fn name(&self) -> &str {
        "harmonic"
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        0.5 * (x * x + y * y)
    }

    fn grad_x(&self, x: f64, _y: f64) -> f64 {
        x
    }

    fn grad_y(&self, _x: f64, y: f64) -> f64 {
        y
    }

    fn bounded_higher_derivatives(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Potential for Zero {
    fn name(&self) -> &str {
        "zero"
    }

    fn value(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn grad_x(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn grad_y(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn bounded_higher_derivatives(&self) -> bool {
        true
    }
}

/// `V(x, y) = y²/2`, independent of the electron.
#[derive(Debug, Clone, Copy, Default)]
pub struct NuclearHarmonic;

impl Potential for NuclearHarmonic {
    fn name(&self) -> &str {
        "nuclear_harmonic"
    }

    fn value(&self, _x: f64, y: f64) -> f64 {
        0.5 * y * y
    }

    fn grad_x(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn grad_y(&self, _x: f64, y: f64) -> f64 {
        y
    }

    fn bounded_higher_derivatives(&self) -> bool {
        true
    }
}

/// `V(x, y) = c·y`: a uniform force `-c` on the nucleus.
#[derive(Debug, Clone, Copy)]
pub struct ConstantForce {
    pub strength: f64,
}

impl Potential for ConstantForce {
    fn name(&self) -> &str {
        "constant_force"
    }

    fn value(&self, _x: f64, y: f64) -> f64 {
        self.strength * y
    }

    fn grad_x(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn grad_y(&self, _x: f64, _y: f64) -> f64 {
        self.strength
    }

    fn bounded_higher_derivatives(&self) -> bool {
        true
    }
}

/// `V(x, y) = x²/2`, acting on the electron only.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElectronHarmonic;

impl Potential for ElectronHarmonic {
    fn name(&self) -> &str {
        "electron_harmonic"
    }

    fn value(&self, x: f64, _y: f64) -> f64 {
        0.5 * x * x
    }

    fn grad_x(&self, x: f64, _y: f64) -> f64 {
        x
    }

    fn grad_y(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn bounded_higher_derivatives(&self) -> bool {
        true
    }
}

/// Names accepted by [`potential_by_name`].
pub const REGISTERED_POTENTIALS: [&str; 3] = ["sin_x2_y2", "harmonic", "zero"];

pub fn potential_by_name(name: &str) -> Result<SharedPotential> {
    match name {
        "sin_x2_y2" => Ok(Arc::new(SinQuadratic)),
        "harmonic" => Ok(Arc::new(Harmonic)),
        "zero" => Ok(Arc::new(Zero)),
        _ => Err(QcmdError::UnknownName {
            kind: "potential",
            name: name.to_string(),
            available: REGISTERED_POTENTIALS.join(", "),
        }),
    }
}

/// `∫ ∂_y V(x, y) |ψ(x)|² dx` on the grid: the force on the nucleus is minus
/// this value.
pub fn ehrenfest_potential_gradient(potential: &dyn Potential, psi: &WaveFunction, y: f64) -> f64 {
    let grid = psi.grid();
    let sum: f64 = psi
        .values()
        .iter()
        .enumerate()
        .map(|(j, c)| potential.grad_y(grid.node(j), y) * c.norm_sqr())
        .sum();
    sum * grid.spacing()
}
