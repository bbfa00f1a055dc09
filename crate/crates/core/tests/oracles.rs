//! Independent reference implementations checked against the library.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

mod common;
use common::second_derivative_matrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcmd::classical::{fine_steps, reference_flow, ClassicalPoint};
use qcmd::experiments::{initial_state, RunConfig};
use qcmd::grid::{make_grid, Grid, Spectral, WaveFunction};
use qcmd::phase_space::{husimi_function, wigner_transform};
use qcmd::potentials::{Potential, SinQuadratic, Zero};
use qcmd::propagator::{NuclearState, Propagator, QcmdState};

/// Adaptive Dormand–Prince 5(4) for `ẋ = ξ, ẏ = v, ξ̇ = -∂ₓV, v̇ = -∂ᵧV`.
fn dormand_prince(p: [f64; 4], t_final: f64, potential: &dyn Potential, tol: f64) -> [f64; 4] {
    let f = |s: &[f64; 4]| {
        let (gx, gy) = potential.gradient(s[0], s[2]);
        [s[1], -gx, s[3], -gy]
    };
    let a: [&[f64]; 6] = [
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    let b5 = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    let b4 = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let (mut s, mut t, mut dt) = (p, 0.0, 1e-3f64);
    while t < t_final {
        dt = dt.min(t_final - t);
        let mut k = [[0.0; 4]; 7];
        k[0] = f(&s);
        for stage in 1..7 {
            let mut tmp = s;
            for (j, aj) in a[stage - 1].iter().enumerate() {
                for c in 0..4 {
                    tmp[c] += dt * aj * k[j][c];
                }
            }
            k[stage] = f(&tmp);
        }
        let mut hi = s;
        let mut err = 0.0f64;
        for c in 0..4 {
            let (mut d5, mut d4) = (0.0, 0.0);
            for j in 0..7 {
                d5 += b5[j] * k[j][c];
                d4 += b4[j] * k[j][c];
            }
            hi[c] += dt * d5;
            err = err.max((dt * (d5 - d4)).abs());
        }
        if err <= tol {
            s = hi;
            t += dt;
        }
        dt *= (0.9 * (tol / err.max(1e-300)).powf(0.2)).clamp(0.2, 5.0);
    }
    s
}

#[test]
fn reference_flow_matches_adaptive_runge_kutta() {
    let potential = SinQuadratic;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = 0.5;
    for _ in 0..10 {
        let p = ClassicalPoint::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
        );
        let ours = reference_flow(&p, t, &potential, fine_steps(t, 1e-5));
        let oracle = ClassicalPoint::from_array(dormand_prince(p.to_array(), t, &potential, 1e-13));
        let diff = ours.max_abs_diff(&oracle);
        assert!(diff <= 1e-7, "{p:?}: {diff:e}");
    }
}

#[test]
fn kinetic_step_matches_dense_matrix_exponential() {
    let n = 64;
    let (h, dt) = (0.3, 0.07);
    let grid = Grid::symmetric(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();

    let eig = SymmetricEigen::new(second_derivative_matrix(n));
    let q = eig.eigenvectors.map(|v| Complex64::new(v, 0.0));
    let phases = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&lambda| Complex64::cis(0.5 * h * dt * lambda)),
    );
    let psi = DVector::from_vec(values.clone());
    let expected = &q * DMatrix::from_diagonal(&phases) * q.adjoint() * psi;

    let mut prop = Propagator::new(grid, h, Arc::new(Zero));
    let mut state = QcmdState::new(
        WaveFunction::new(grid, values, h).unwrap(),
        NuclearState::new(0.0, 0.0),
    );
    prop.kinetic_step(&mut state, dt);
    let err = state
        .psi
        .values()
        .iter()
        .zip(expected.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err <= 1e-10, "{err:e}");
}

fn packet(h: f64) -> WaveFunction {
    let cfg = RunConfig {
        h,
        ..RunConfig::default()
    };
    initial_state(&cfg).unwrap().psi
}

#[test]
fn husimi_equals_smoothed_wigner() {
    let h = 2f64.powi(-5);
    let psi = packet(h);
    let w = wigner_transform(&psi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cell = w.cell_area();
    for _ in 0..20 {
        let x = -1.0 + rng.random_range(-0.3..0.3);
        let xi = 50.0 * h + rng.random_range(-0.4..0.4);
        let direct = husimi_function(&psi, &[x], &[xi]).unwrap().values[0];
        let mut smoothed = 0.0;
        for (i, &xw) in w.x_nodes.iter().enumerate() {
            let gx = (-(xw - x).powi(2) / h).exp();
            if gx < 1e-18 {
                continue;
            }
            for (k, &xiw) in w.xi_nodes.iter().enumerate() {
                smoothed += w.at(i, k) * gx * (-(xiw - xi).powi(2) / h).exp();
            }
        }
        smoothed *= cell / (PI * h);
        assert!((direct - smoothed).abs() <= 1e-5, "({x}, {xi}): {direct} vs {smoothed}");
    }
}

#[test]
fn wigner_x_marginal_is_the_momentum_density() {
    let h = 2f64.powi(-5);
    let psi = packet(h);
    let w = wigner_transform(&psi).unwrap();
    let marginal = w.xi_marginal();
    let grid = psi.grid();
    let dx = grid.spacing();
    let nodes = grid.nodes();
    let mut worst = 0.0f64;
    for (k, &xi) in w.xi_nodes.iter().enumerate() {
        let ft: Complex64 = psi
            .values()
            .iter()
            .zip(&nodes)
            .map(|(c, &x)| c * Complex64::cis(-x * xi / h))
            .sum::<Complex64>()
            * dx;
        let density = ft.norm_sqr() / (2.0 * PI * h);
        worst = worst.max((marginal[k] - density).abs());
    }
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn wigner_l2_norm_identity() {
    for h in [2f64.powi(-4), 2f64.powi(-6)] {
        let w = wigner_transform(&packet(h)).unwrap();
        let expected = (2.0 * PI * h).powf(-0.5);
        assert!((w.l2_norm() - expected).abs() <= 1e-4 * expected, "h = {h}");
    }
    // at h = 1 the identity agrees with the (2π)^{-1/2} h^{-1} form
    let h = 1.0;
    let grid = make_grid(h, 32).unwrap();
    let mut psi = WaveFunction::from_fn(grid, h, |x| Complex64::new(-2.0 * x * x, 2.0 * x).exp()).unwrap();
    psi.normalize();
    let norm = wigner_transform(&psi).unwrap().l2_norm();
    let paper_form = (2.0 * PI).powf(-0.5) / h;
    assert!((norm - paper_form).abs() <= 1e-4 * paper_form, "{norm} vs {paper_form}");
}

#[test]
fn spectral_transform_is_unitary() {
    let grid = make_grid(0.1, 32).unwrap();
    let spectral = Spectral::new(grid.n_points());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values: Vec<Complex64> = (0..grid.n_points())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let coeffs = spectral.unitary_coefficients(&values);
    let a: f64 = values.iter().map(|c| c.norm_sqr()).sum();
    let b: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    assert!((a - b).abs() <= 1e-10 * a);
}
