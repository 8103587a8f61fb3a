use mtlrank_core::GradientMatrix;
use rand::Rng;

use crate::{dot, norm};

/// All points of the simplex in `k` dimensions with coordinates on a
/// `1/steps` lattice.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|c| *c as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(k - 1, left - c, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// `Σ_k v_k g_k`, computed row by row.
pub fn combine(g: &GradientMatrix, v: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; g.cols()];
    for (k, w) in v.iter().enumerate() {
        for (di, gi) in d.iter_mut().zip(g.row(k)) {
            *di += w * gi;
        }
    }
    d
}

/// Smallest `‖Gᵀv‖` over the simplex lattice.
pub fn grid_min_norm(g: &GradientMatrix, steps: usize) -> f64 {
    simplex_grid(g.n_tasks(), steps).iter().map(|v| norm(&combine(g, v))).fold(f64::INFINITY, f64::min)
}

/// Minimum over the simplex lattice of an arbitrary objective, with the
/// minimizing point.
pub fn grid_minimize<F: Fn(&[f64]) -> f64>(k: usize, steps: usize, f: F) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, Vec::new());
    for v in simplex_grid(k, steps) {
        let value = f(&v);
        if value < best.0 {
            best = (value, v);
        }
    }
    best
}

/// Every permutation of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}

fn dcg_direct(labels: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        if i >= k {
            break;
        }
        total += (2f64.powf(*y) - 1.0) / ((i + 2) as f64).log2();
    }
    total
}

/// NDCG@k of labels in ranked order, with the ideal DCG found by trying every
/// permutation.
pub fn brute_ndcg(labels: &[f64], k: usize) -> f64 {
    let ideal = permutations(labels.len())
        .iter()
        .map(|p| dcg_direct(&p.iter().map(|&i| labels[i]).collect::<Vec<_>>(), k))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        1.0
    } else {
        dcg_direct(labels, k) / ideal
    }
}

/// Monte Carlo hypervolume: the fraction of uniform samples in the box
/// between the coordinate-wise minimum and `reference` that some point
/// weakly dominates, times the box volume.
pub fn mc_hypervolume<R: Rng>(points: &[Vec<f64>], reference: &[f64], samples: usize, rng: &mut R) -> f64 {
    let k = reference.len();
    let lo: Vec<f64> = (0..k).map(|d| points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min)).collect();
    let volume: f64 = (0..k).map(|d| (reference[d] - lo[d]).max(0.0)).product();
    if volume == 0.0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut x = vec![0.0; k];
    for _ in 0..samples {
        for d in 0..k {
            x[d] = lo[d] + rng.random::<f64>() * (reference[d] - lo[d]);
        }
        if points.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    volume * hits as f64 / samples as f64
}

/// Non-dominated flags by a plain double loop (minimization).
pub fn brute_pareto(points: &[Vec<f64>]) -> Vec<bool> {
    let mut flags = vec![true; points.len()];
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let mut no_worse = true;
            let mut better = false;
            for d in 0..points[i].len() {
                if points[j][d] > points[i][d] {
                    no_worse = false;
                }
                if points[j][d] < points[i][d] {
                    better = true;
                }
            }
            if no_worse && better {
                flags[i] = false;
            }
        }
    }
    flags
}

/// Cosine similarity.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}
