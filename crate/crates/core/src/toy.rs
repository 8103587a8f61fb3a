//! Two-quadratics toy problem with a known Pareto front.
//!
//! `L1(θ) = ‖θ − a‖²`, `L2(θ) = ‖θ − b‖²` with `a = (1, 0)`, `b = (0, 1)`.
//! The Pareto set is the segment `θ = (1 − t, t)`, `t ∈ [0, 1]`, whose image
//! is `L1 = 2t²`, `L2 = 2(1 − t)²`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balancers::{min_norm_weights, Balancer, BalancerKind, GradientMatrix, Preference};
use crate::error::BalanceError;
use crate::math;

pub const TARGET_A: [f64; 2] = [1.0, 0.0];
pub const TARGET_B: [f64; 2] = [0.0, 1.0];
pub const START: [f64; 2] = [-1.0, -1.0];

/// Losses and gradient rows at `theta`.
pub fn two_quadratics(theta: &[f64]) -> ([f64; 2], GradientMatrix) {
    let da = [theta[0] - TARGET_A[0], theta[1] - TARGET_A[1]];
    let db = [theta[0] - TARGET_B[0], theta[1] - TARGET_B[1]];
    let losses = [math::dot(&da, &da), math::dot(&db, &db)];
    let grads = GradientMatrix::from_rows(vec![vec![2.0 * da[0], 2.0 * da[1]], vec![2.0 * db[0], 2.0 * db[1]]]);
    (losses, grads)
}

/// Front point at segment position `t`.
pub fn front_point(t: f64) -> [f64; 2] {
    [2.0 * t * t, 2.0 * (1.0 - t) * (1.0 - t)]
}

/// Distance from a loss pair to the analytic front, by dense search over `t`.
pub fn distance_to_front(l: [f64; 2]) -> f64 {
    let n = 20_000;
    (0..=n)
        .map(|i| {
            let p = front_point(i as f64 / n as f64);
            math::sqrt((p[0] - l[0]) * (p[0] - l[0]) + (p[1] - l[1]) * (p[1] - l[1]))
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTrace {
    /// Loss pair before every step and after the last one.
    pub losses: Vec<[f64; 2]>,
    pub theta: [f64; 2],
}

impl ToyTrace {
    pub fn final_losses(&self) -> [f64; 2] {
        *self.losses.last().expect("trace holds the starting point")
    }

    /// Norm of the min-norm combination of the final gradients.
    pub fn stationarity(&self) -> f64 {
        let (_, g) = two_quadratics(&self.theta);
        let w = min_norm_weights(&g);
        math::norm(&g.combine(w.as_slice()))
    }
}

/// Plain gradient descent on the toy problem, `θ ← θ − lr·d`, with `d` from
/// the balancer.
pub fn run_toy(
    kind: &BalancerKind,
    pref: &Preference,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<ToyTrace, BalanceError> {
    let mut balancer = Balancer::new(kind.clone(), 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = START;
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (l, g) = two_quadratics(&theta);
        losses.push(l);
        let c = balancer.combine(&l, &g, pref, &mut rng)?;
        theta[0] -= lr * c.direction[0];
        theta[1] -= lr * c.direction[1];
    }
    losses.push(two_quadratics(&theta).0);
    Ok(ToyTrace { losses, theta })
}

/// `n` evenly spaced rays `(i/(n+1), 1 − i/(n+1))`, `i = 1..=n`.
pub fn default_rays(n: usize) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|i| {
            let a = i as f64 / (n + 1) as f64;
            vec![a, 1.0 - a]
        })
        .collect()
}
