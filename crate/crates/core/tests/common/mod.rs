//! Helpers shared by the integration test targets.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Dense periodic spectral second-derivative matrix on `[-π, π)`.
pub fn second_derivative_matrix(n: usize) -> DMatrix<f64> {
    let dx = 2.0 * PI / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -PI * PI / (3.0 * dx * dx) - 1.0 / 6.0
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            -sign * 0.5 / (0.5 * d * dx).sin().powi(2)
        }
    })
}
