//! Conflict-averse directions: CAGrad and SDMGrad.

use alloc::vec;
use alloc::vec::Vec;

use super::{GradientMatrix, SimplexWeights};
use crate::math::{self, EPS};

const CAGRAD_STEPS: usize = 200;
const CAGRAD_LR: f64 = 0.05;

/// CAGrad direction `g0 + (c‖g0‖/‖g_w‖) g_w`, where `g0` is the mean
/// gradient and `w` minimizes `wᵀGg0 + c‖g0‖‖Gᵀw‖` over the simplex.
pub fn cagrad(grads: &GradientMatrix, c: f64) -> Vec<f64> {
    cagrad_weights(grads, c).0
}

/// [`cagrad`] together with the inner weights `w`.
pub fn cagrad_weights(grads: &GradientMatrix, c: f64) -> (Vec<f64>, SimplexWeights) {
    let k = grads.n_tasks();
    let g0 = grads.mean_row();
    let m = grads.gram();
    let b: Vec<f64> = (0..k).map(|i| m.row(i).iter().sum::<f64>() / k as f64).collect();
    let radius = c * math::norm(&g0);
    let mut w = vec![1.0 / k as f64; k];
    if radius > 0.0 {
        for _ in 0..CAGRAD_STEPS {
            let mw = m.mul_vec(&w);
            let gw_norm = math::sqrt(math::dot(&w, &mw).max(0.0)).max(EPS);
            let probe: Vec<f64> =
                (0..k).map(|i| w[i] - CAGRAD_LR * (b[i] + radius * mw[i] / gw_norm)).collect();
            w = math::project_simplex(&probe);
        }
    }
    let gw = grads.combine(&w);
    let gw_norm = math::norm(&gw);
    let mut d = g0;
    if radius > 0.0 && gw_norm > EPS {
        math::axpy(radius / gw_norm, &gw, &mut d);
    }
    (d, SimplexWeights::normalized(w))
}

/// SDMGrad direction `(Gᵀw + λg0)/(1+λ)` with `w` minimizing
/// `‖Gᵀw + λg0‖²` over the simplex by projected gradient.
pub fn sdmgrad(grads: &GradientMatrix, lambda: f64, inner_iters: usize) -> Vec<f64> {
    sdmgrad_weights(grads, lambda, inner_iters, None).0
}

/// [`sdmgrad`] with an optional warm start, returning the weights too.
pub fn sdmgrad_weights(
    grads: &GradientMatrix,
    lambda: f64,
    inner_iters: usize,
    warm: Option<&[f64]>,
) -> (Vec<f64>, SimplexWeights) {
    let k = grads.n_tasks();
    let g0 = grads.mean_row();
    let m = grads.gram();
    let b: Vec<f64> = (0..k).map(|i| m.row(i).iter().sum::<f64>() / k as f64).collect();
    let mut w = match warm {
        Some(w) if w.len() == k => w.to_vec(),
        _ => vec![1.0 / k as f64; k],
    };
    let lipschitz = 2.0 * m.max_eigenvalue();
    if lipschitz > EPS {
        // accelerated projected gradient
        let step = 1.0 / lipschitz;
        let mut y = w.clone();
        let mut t = 1.0;
        for _ in 0..inner_iters {
            let my = m.mul_vec(&y);
            let probe: Vec<f64> = (0..k).map(|i| y[i] - step * 2.0 * (my[i] + lambda * b[i])).collect();
            let next = math::project_simplex(&probe);
            let t_next = (1.0 + math::sqrt(1.0 + 4.0 * t * t)) / 2.0;
            let beta = (t - 1.0) / t_next;
            y = next.iter().zip(&w).map(|(n, o)| n + beta * (n - o)).collect();
            w = next;
            t = t_next;
        }
    }
    let mut d = grads.combine(&w);
    math::axpy(lambda, &g0, &mut d);
    d.iter_mut().for_each(|v| *v /= 1.0 + lambda);
    (d, SimplexWeights::normalized(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cagrad_with_zero_c_is_the_mean_gradient() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, 2.0], vec![-3.0, 0.5]]);
        assert_eq!(cagrad(&g, 0.0), vec![-1.0, 1.25]);
    }

    #[test]
    fn cagrad_on_identical_rows_scales_the_row() {
        let g = GradientMatrix::from_rows(vec![vec![0.6, -0.8], vec![0.6, -0.8]]);
        let d = cagrad(&g, 0.4);
        assert!((d[0] - 0.84).abs() < 1e-12 && (d[1] + 1.12).abs() < 1e-12);
    }

    #[test]
    fn sdmgrad_large_lambda_tends_to_mean() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 3.0]]);
        let d = sdmgrad(&g, 1e6, 50);
        assert!((d[0] - 0.5).abs() < 1e-5 && (d[1] - 1.5).abs() < 1e-5);
    }
}
