//! Quantum–classical molecular dynamics in one dimension: a Strang-split
//! spectral propagator for the Ehrenfest system, its classical limit flow,
//! Wigner/Husimi phase-space tools, and the convergence experiments built on
//! top of them.

pub mod classical;
pub mod egorov;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod grid;
pub mod observables;
pub mod phase_space;
pub mod potentials;
pub mod propagator;

pub use classical::{ClassicalPoint, NuclearCoupling, PhaseEnsemble};
pub use error::{QcmdError, Result};
pub use grid::{make_grid, Grid, WaveFunction};
pub use observables::{expectation, observable_by_name, Observable};
pub use phase_space::{FieldKind, PhaseSpaceField};
pub use potentials::{potential_by_name, Potential, SharedPotential};
pub use propagator::{NuclearState, Propagator, QcmdState};
