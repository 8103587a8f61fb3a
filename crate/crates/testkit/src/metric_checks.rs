//! Randomized agreement checks for NDCG, hypervolume and Pareto filtering.

use mtlrank_core::metrics::{hypervolume, ndcg_at_k, pareto_filter};
use mtlrank_core::MetricPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles::{brute_pareto, mc_hypervolume, permutations};

fn dcg(labels: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, y) in labels.iter().take(k).enumerate() {
        total += (2f64.powf(*y) - 1.0) / ((i + 2) as f64).log2();
    }
    total
}

/// Worst `|ndcg_at_k − oracle|` over every ordering of `labels` and every
/// cutoff `1..=len+1`. The oracle's ideal DCG is the maximum over all
/// orderings, not a sort.
pub fn ndcg_all_orderings(labels: &[f64]) -> f64 {
    let perms = permutations(labels.len());
    let ordered: Vec<Vec<f64>> = perms.iter().map(|p| p.iter().map(|&i| labels[i]).collect()).collect();
    let mut worst: f64 = 0.0;
    for k in 1..=labels.len() + 1 {
        let ideal = ordered.iter().map(|o| dcg(o, k)).fold(0.0, f64::max);
        for o in &ordered {
            let expected = if ideal == 0.0 { 1.0 } else { dcg(o, k) / ideal };
            let got = ndcg_at_k(o, k).expect("k ≥ 1");
            worst = worst.max((got - expected).abs());
        }
    }
    worst
}

/// Label multisets exercised by the exhaustive NDCG check: for every length
/// `1..=max_len`, an all-zero list, a tie-heavy list and `random` lists of
/// grades in `0..=4`.
pub fn ndcg_label_sets(max_len: usize, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::new();
    for n in 1..=max_len {
        sets.push(vec![0.0; n]);
        sets.push((0..n).map(|i| (i % 2) as f64).collect());
        for _ in 0..random {
            sets.push((0..n).map(|_| rng.random_range(0..=4) as f64).collect());
        }
    }
    sets
}

/// Worst relative gap between the exact hypervolume and a Monte Carlo
/// estimate over `instances` random 2-D point sets.
pub fn hv_vs_monte_carlo(instances: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=12);
        let points: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let reference = vec![rng.random_range(1.0..1.5), rng.random_range(1.0..1.5)];
        let exact = hypervolume(&points, &reference).expect("2-D");
        let estimate = mc_hypervolume(&points, &reference, samples, &mut rng);
        worst = worst.max((exact - estimate).abs() / exact);
    }
    worst
}

/// Number of random minimization point sets (n ≤ 50, K ∈ {2, 3}) on which
/// `pareto_filter` disagrees with the double-loop oracle. Coordinates come
/// from a coarse lattice so ties and duplicates occur.
pub fn pareto_disagreements(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..=50);
        let k = rng.random_range(2..=3);
        let points: Vec<Vec<f64>> =
            (0..n).map(|_| (0..k).map(|_| rng.random_range(0..8) as f64 / 4.0).collect()).collect();
        let mps: Vec<MetricPoint> = points.iter().map(|p| MetricPoint::minimize(p.clone())).collect();
        let front = pareto_filter(&mps).expect("consistent");
        if front.non_dominated != brute_pareto(&points) {
            bad += 1;
        }
    }
    bad
}
