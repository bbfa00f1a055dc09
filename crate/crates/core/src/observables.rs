//! Observables given by phase-space symbols `a(x, ξ)`, their quantum
//! expectations on sampled wavefunctions and their classical pullbacks.

use std::fmt;
use std::sync::Arc;

use crate::classical::{reference_flow, verlet_flow, ClassicalPoint};
use crate::error::{QcmdError, Result};
use crate::grid::{fourier_modes, quadrature, Spectral, WaveFunction};
use crate::phase_space::{wigner_field_expectation, wigner_transform};
use crate::potentials::SharedPotential;

/// Mass tolerance accepted by [`expectation`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

/// Step of the five-point second-derivative fallback.
pub const LAPLACIAN_FD_STEP: f64 = 1e-4;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function of one variable with an optional analytic second
/// derivative.
#[derive(Clone)]
pub struct Factor {
    value: ScalarFn,
    second_derivative: Option<ScalarFn>,
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factor")
            .field("analytic_second_derivative", &self.second_derivative.is_some())
            .finish()
    }
}

impl Factor {
    pub fn new(value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            second_derivative: None,
        }
    }

    pub fn with_second_derivative(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            second_derivative: Some(Arc::new(second)),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.value)(s)
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        match &self.second_derivative {
            Some(d2) => d2(s),
            None => {
                let d = LAPLACIAN_FD_STEP;
                let f = &self.value;
                (-f(s + 2.0 * d) + 16.0 * f(s + d) - 30.0 * f(s) + 16.0 * f(s - d) - f(s - 2.0 * d))
                    / (12.0 * d * d)
            }
        }
    }

    fn combine(alpha: f64, a: &Factor, beta: f64, b: &Factor) -> Factor {
        let (fa, fb) = (a.value.clone(), b.value.clone());
        let value: ScalarFn = Arc::new(move |s| alpha * fa(s) + beta * fb(s));
        let second_derivative = match (&a.second_derivative, &b.second_derivative) {
            (Some(da), Some(db)) => {
                let (da, db) = (da.clone(), db.clone());
                Some(Arc::new(move |s| alpha * da(s) + beta * db(s)) as ScalarFn)
            }
            _ => None,
        };
        Factor {
            value,
            second_derivative,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ObservableKind {
    /// `a(x, ξ) = f(x)`.
    PositionMultiplier(Factor),
    /// `a(x, ξ) = g(ξ)`.
    FourierMultiplier(Factor),
    /// `a(x, ξ) = f(x) g(ξ)`, evaluated through the Wigner function.
    Separable { position: Factor, momentum: Factor },
}

#[derive(Debug, Clone)]
pub struct Observable {
    name: String,
    kind: ObservableKind,
    schwartz: bool,
}

impl Observable {
    pub fn new(name: impl Into<String>, kind: ObservableKind, schwartz: bool) -> Self {
        Self {
            name: name.into(),
            kind,
            schwartz,
        }
    }

    pub fn position_multiplier(name: impl Into<String>, f: Factor, schwartz: bool) -> Self {
        Self::new(name, ObservableKind::PositionMultiplier(f), schwartz)
    }

    pub fn fourier_multiplier(name: impl Into<String>, g: Factor, schwartz: bool) -> Self {
        Self::new(name, ObservableKind::FourierMultiplier(g), schwartz)
    }

    pub fn separable(name: impl Into<String>, f: Factor, g: Factor, schwartz: bool) -> Self {
        Self::new(
            name,
            ObservableKind::Separable {
                position: f,
                momentum: g,
            },
            schwartz,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    /// Whether the symbol decays fast enough for the phase-space integral
    /// formulas (the experiments treat `e^{-4x²}`-type symbols as such).
    pub fn is_schwartz(&self) -> bool {
        self.schwartz
    }

    pub fn symbol(&self, x: f64, xi: f64) -> f64 {
        match &self.kind {
            ObservableKind::PositionMultiplier(f) => f.eval(x),
            ObservableKind::FourierMultiplier(g) => g.eval(xi),
            ObservableKind::Separable { position, momentum } => position.eval(x) * momentum.eval(xi),
        }
    }

    /// `∂²_x a + ∂²_ξ a`.
    pub fn laplacian(&self, x: f64, xi: f64) -> f64 {
        match &self.kind {
            ObservableKind::PositionMultiplier(f) => f.second_derivative(x),
            ObservableKind::FourierMultiplier(g) => g.second_derivative(xi),
            ObservableKind::Separable { position, momentum } => {
                position.second_derivative(x) * momentum.eval(xi)
                    + position.eval(x) * momentum.second_derivative(xi)
            }
        }
    }

    /// `α A + β B` for two multipliers of the same kind.
    pub fn linear_combination(alpha: f64, a: &Observable, beta: f64, b: &Observable) -> Result<Observable> {
        let kind = match (&a.kind, &b.kind) {
            (ObservableKind::PositionMultiplier(f), ObservableKind::PositionMultiplier(g)) => {
                ObservableKind::PositionMultiplier(Factor::combine(alpha, f, beta, g))
            }
            (ObservableKind::FourierMultiplier(f), ObservableKind::FourierMultiplier(g)) => {
                ObservableKind::FourierMultiplier(Factor::combine(alpha, f, beta, g))
            }
            _ => {
                return Err(QcmdError::Unsupported(format!(
                    "cannot combine `{}` and `{}`: only multipliers of the same kind",
                    a.name, b.name
                )))
            }
        };
        Ok(Observable::new(
            format!("{alpha}*{}+{beta}*{}", a.name, b.name),
            kind,
            a.schwartz && b.schwartz,
        ))
    }
}

/// Names accepted by [`observable_by_name`].
pub const BUILTIN_OBSERVABLES: [&str; 5] = ["position", "momentum", "gaussian", "xgaussian", "kinetic"];

pub fn builtin_observables() -> Vec<Observable> {
    BUILTIN_OBSERVABLES
        .iter()
        .map(|n| observable_by_name(n).expect("builtin"))
        .collect()
}

pub fn observable_by_name(name: &str) -> Result<Observable> {
    let obs = match name {
        "position" => Observable::position_multiplier(
            name,
            Factor::with_second_derivative(|x| x, |_| 0.0),
            false,
        ),
        "momentum" => Observable::fourier_multiplier(
            name,
            Factor::with_second_derivative(|xi| xi, |_| 0.0),
            false,
        ),
        "gaussian" => Observable::position_multiplier(
            name,
            Factor::with_second_derivative(
                |x| (-4.0 * x * x).exp(),
                |x| (64.0 * x * x - 8.0) * (-4.0 * x * x).exp(),
            ),
            true,
        ),
        "xgaussian" => Observable::position_multiplier(
            name,
            Factor::with_second_derivative(
                |x| x * (-4.0 * x * x).exp(),
                |x| (64.0 * x * x * x - 24.0 * x) * (-4.0 * x * x).exp(),
            ),
            true,
        ),
        "kinetic" => Observable::fourier_multiplier(
            name,
            Factor::with_second_derivative(|xi| 0.5 * xi * xi, |_| 1.0),
            false,
        ),
        _ => {
            return Err(QcmdError::UnknownName {
                kind: "observable",
                name: name.to_string(),
                available: BUILTIN_OBSERVABLES.join(", "),
            })
        }
    };
    Ok(obs)
}

/// `⟨ψ, op(a) ψ⟩` for a normalized `ψ`.
pub fn expectation(observable: &Observable, psi: &WaveFunction) -> Result<f64> {
    psi.require_normalized(NORMALIZATION_TOLERANCE)?;
    Ok(match &observable.kind {
        ObservableKind::PositionMultiplier(f) => position_expectation(f, psi),
        ObservableKind::FourierMultiplier(g) => {
            let spectral = Spectral::new(psi.grid().n_points());
            fourier_expectation(g, psi, &spectral)
        }
        ObservableKind::Separable { .. } => {
            let field = wigner_transform(psi)?;
            wigner_field_expectation(&field, |x, xi| observable.symbol(x, xi))
        }
    })
}

/// Expectation reusing an existing FFT plan; multipliers only.
pub fn expectation_with(observable: &Observable, psi: &WaveFunction, spectral: &Spectral) -> Result<f64> {
    psi.require_normalized(NORMALIZATION_TOLERANCE)?;
    match &observable.kind {
        ObservableKind::PositionMultiplier(f) => Ok(position_expectation(f, psi)),
        ObservableKind::FourierMultiplier(g) => Ok(fourier_expectation(g, psi, spectral)),
        ObservableKind::Separable { .. } => expectation(observable, psi),
    }
}

fn position_expectation(f: &Factor, psi: &WaveFunction) -> f64 {
    let grid = psi.grid();
    let weighted: Vec<f64> = psi
        .values()
        .iter()
        .enumerate()
        .map(|(j, c)| f.eval(grid.node(j)) * c.norm_sqr())
        .collect();
    quadrature(&weighted, grid)
}

fn fourier_expectation(g: &Factor, psi: &WaveFunction, spectral: &Spectral) -> f64 {
    let grid = psi.grid();
    let h = psi.h();
    let coeffs = spectral.unitary_coefficients(psi.values());
    let sum: f64 = fourier_modes(grid)
        .iter()
        .zip(&coeffs)
        .map(|(k, c)| g.eval(h * k) * c.norm_sqr())
        .sum();
    sum * grid.spacing()
}

/// How the classical flow in a pullback is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowScheme {
    /// Fine Störmer–Verlet with `n_fine` substeps.
    Exact { n_fine: usize },
    /// Iterated Störmer–Verlet with step `dt`; `t` must be a multiple of it.
    Verlet { dt: f64 },
}

/// `(x, ξ, y, v) ↦ a(Φ^t(x, ξ, y, v))`, with each point carrying its own
/// nucleus. Only the electronic pair enters the symbol.
pub fn classical_pullback(
    observable: &Observable,
    t: f64,
    potential: SharedPotential,
    scheme: FlowScheme,
) -> impl Fn(&ClassicalPoint) -> f64 + Send + Sync {
    let observable = observable.clone();
    move |p: &ClassicalPoint| {
        let q = match scheme {
            FlowScheme::Exact { n_fine } => reference_flow(p, t, &*potential, n_fine),
            FlowScheme::Verlet { dt } => {
                let n = if t == 0.0 { 0 } else { (t / dt).round() as usize };
                verlet_flow(p, dt, n, &*potential)
            }
        };
        observable.symbol(q.x, q.xi)
    }
}
