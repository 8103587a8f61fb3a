//! Pareto-front tracing on the two-quadratics problem.

use mtlrank_core::toy::{default_rays, distance_to_front, run_toy};
use mtlrank_core::{BalancerKind, Preference};

use crate::oracles::brute_pareto;

pub const STEPS: usize = 2000;
pub const LR: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub finals: Vec<[f64; 2]>,
    /// How many finals the double-loop oracle flags as non-dominated.
    pub non_dominated: usize,
    /// Largest distance from a final loss pair to the analytic front.
    pub max_distance: f64,
}

/// One toy run per default ray.
pub fn sweep(kind: &BalancerKind, n_rays: usize) -> SweepResult {
    let finals: Vec<[f64; 2]> = default_rays(n_rays)
        .into_iter()
        .map(|r| {
            let pref = Preference::new(r).expect("valid ray");
            run_toy(kind, &pref, STEPS, LR, 0).expect("toy run").final_losses()
        })
        .collect();
    let as_vecs: Vec<Vec<f64>> = finals.iter().map(|l| l.to_vec()).collect();
    let non_dominated = brute_pareto(&as_vecs).iter().filter(|f| **f).count();
    let max_distance = finals.iter().map(|l| distance_to_front(*l)).fold(0.0, f64::max);
    SweepResult { finals, non_dominated, max_distance }
}

/// Largest `|r_1 L_1 − r_2 L_2|` at the end of weighted-Chebyshev runs on
/// the default rays.
pub fn wc_equalization(n_rays: usize) -> f64 {
    default_rays(n_rays)
        .into_iter()
        .map(|r| {
            let pref = Preference::new(r.clone()).expect("valid ray");
            let l = run_toy(&BalancerKind::Wc, &pref, STEPS, LR, 0).expect("toy run").final_losses();
            (r[0] * l[0] - r[1] * l[1]).abs()
        })
        .fold(0.0, f64::max)
}
