//! Quadratic problems over the probability simplex.

use alloc::vec;
use alloc::vec::Vec;

use super::{GradientMatrix, SimplexWeights};
use crate::math::{self, Matrix, EPS};

const FW_MAX_ITERS: usize = 250;
const FW_GAP: f64 = 1e-7;

/// Min-norm point of the convex hull of the gradient rows:
/// `argmin_{w ∈ Δ} ‖Gᵀw‖²`.
pub fn min_norm_weights(grads: &GradientMatrix) -> SimplexWeights {
    SimplexWeights::normalized(min_norm_from_gram(&grads.gram()))
}

/// Frank-Wolfe on the Gram matrix `M = G Gᵀ`, started at the best pair of
/// vertices and stopped when the duality gap drops below `1e-7`.
pub fn min_norm_from_gram(m: &Matrix) -> Vec<f64> {
    let k = m.rows;
    if k == 1 {
        return vec![1.0];
    }
    if (0..k).all(|i| m.get(i, i) <= EPS * EPS) {
        return vec![1.0 / k as f64; k];
    }
    let mut w = vec![0.0; k];
    let mut best = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            let (gamma, value) = segment_min(m.get(i, i), m.get(i, j), m.get(j, j));
            if value < best {
                best = value;
                w.iter_mut().for_each(|v| *v = 0.0);
                w[i] = gamma;
                w[j] = 1.0 - gamma;
            }
        }
    }
    for _ in 0..FW_MAX_ITERS {
        let mw = m.mul_vec(&w);
        let vv = math::dot(&w, &mw);
        let (t, mt) = mw
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("k >= 2");
        if vv - mt <= FW_GAP {
            break;
        }
        let denom = vv - 2.0 * mt + m.get(t, t);
        if denom <= EPS {
            break;
        }
        let gamma = ((vv - mt) / denom).clamp(0.0, 1.0);
        w.iter_mut().for_each(|v| *v *= 1.0 - gamma);
        w[t] += gamma;
    }
    w
}

/// Minimizer of `‖γ a + (1−γ) b‖²` over `γ ∈ [0, 1]` given
/// `aa = ‖a‖²`, `ab = a·b`, `bb = ‖b‖²`.
fn segment_min(aa: f64, ab: f64, bb: f64) -> (f64, f64) {
    let denom = aa + bb - 2.0 * ab;
    let gamma = if denom <= EPS { 0.5 } else { ((bb - ab) / denom).clamp(0.0, 1.0) };
    let value = gamma * gamma * aa + 2.0 * gamma * (1.0 - gamma) * ab + (1.0 - gamma) * (1.0 - gamma) * bb;
    (gamma, value)
}

/// Minimizes `½ λᵀMλ − cᵀλ` over the simplex by accelerated projected
/// gradient with step `1/λ_max(M)`.
pub fn simplex_qp(m: &Matrix, c: &[f64], iters: usize) -> Vec<f64> {
    let k = m.rows;
    let lmax = m.max_eigenvalue();
    if lmax <= EPS {
        let best = c
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        let mut w = vec![0.0; k];
        w[best] = 1.0;
        return w;
    }
    let step = 1.0 / lmax;
    let mut x = vec![1.0 / k as f64; k];
    let mut y = x.clone();
    let mut t = 1.0;
    for _ in 0..iters {
        let grad: Vec<f64> = m.mul_vec(&y).iter().zip(c).map(|(a, b)| a - b).collect();
        let probe: Vec<f64> = y.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
        let next = math::project_simplex(&probe);
        let t_next = (1.0 + math::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        let beta = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(n, o)| n + beta * (n - o)).collect();
        x = next;
        t = t_next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_min_norm(g: &GradientMatrix, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let a = i as f64 / steps as f64;
            let d = g.combine(&[a, 1.0 - a]);
            best = best.min(math::dot(&d, &d));
        }
        best
    }

    #[test]
    fn identical_rows_give_that_row() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let w = min_norm_weights(&g);
        let d = g.combine(w.as_slice());
        assert!((d[0] - 1.0).abs() < 1e-12 && (d[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_unit_rows_split_evenly() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let w = min_norm_weights(&g);
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_give_uniform_weights() {
        let g = GradientMatrix::from_rows(vec![vec![0.0; 3]; 3]);
        assert_eq!(min_norm_weights(&g), SimplexWeights::uniform(3));
    }

    #[test]
    fn two_task_matches_grid() {
        let g = GradientMatrix::from_rows(vec![vec![3.0, 1.0, -2.0], vec![-1.0, 0.5, 1.0]]);
        let w = min_norm_weights(&g);
        let d = g.combine(w.as_slice());
        let ours = math::dot(&d, &d);
        let grid = grid_min_norm(&g, 100_000);
        assert!(ours <= grid + 1e-9, "{ours} vs {grid}");
    }

    #[test]
    fn qp_with_zero_quadratic_picks_best_vertex() {
        let m = Matrix::zeros(3, 3);
        assert_eq!(simplex_qp(&m, &[0.1, 0.5, 0.2], 10), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn qp_matches_min_norm_when_linear_term_vanishes() {
        let g = GradientMatrix::from_rows(vec![vec![2.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]]);
        let m = g.gram();
        let a = simplex_qp(&m, &[0.0; 3], 5000);
        let b = min_norm_from_gram(&m);
        assert!((m.quad(&a) - m.quad(&b)).abs() < 1e-8);
    }
}
