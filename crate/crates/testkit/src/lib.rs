//! Oracles for the test suites: finite-difference harnesses, brute-force
//! searches and Monte Carlo estimators that share no code with the
//! implementations they check.

pub mod balancer_checks;
pub mod data_checks;
pub mod gradcheck;
pub mod invariants;
pub mod metric_checks;
pub mod oracles;
pub mod toy_checks;

use mtlrank_core::GradientMatrix;
use rand::Rng;

/// `k × n` gradient matrix with entries uniform in `[-scale, scale]`.
pub fn random_gradients<R: Rng>(rng: &mut R, k: usize, n: usize, scale: f64) -> GradientMatrix {
    GradientMatrix::from_rows(
        (0..k).map(|_| (0..n).map(|_| rng.random_range(-scale..scale)).collect()).collect(),
    )
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
