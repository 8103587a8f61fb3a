//! Impartial and bargaining weightings: IMTL-G, Nash-MTL and FAMO.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{require_positive, GradientMatrix, SimplexWeights};
use crate::error::BalanceError;
use crate::math::{self, Matrix, EPS};

#[derive(Clone, Debug, PartialEq)]
pub struct ImtlOutput {
    pub direction: Vec<f64>,
    pub alpha: Vec<f64>,
    /// The linear system was singular and uniform weights were used.
    pub fallback: bool,
}

/// IMTL-G: weights `α` (summing to one) such that `d = Gᵀα` has the same
/// projection onto every unit task gradient.
pub fn imtl_g(grads: &GradientMatrix) -> Result<ImtlOutput, BalanceError> {
    let k = grads.n_tasks();
    let mut units = Vec::with_capacity(k);
    for (i, row) in grads.rows().enumerate() {
        let n = math::norm(row);
        if n <= EPS {
            return Err(BalanceError::ZeroGradient(i));
        }
        units.push(row.iter().map(|v| v / n).collect::<Vec<f64>>());
    }
    let g1 = grads.row(0);
    let u_diff: Vec<Vec<f64>> =
        (1..k).map(|j| units[0].iter().zip(&units[j]).map(|(a, b)| a - b).collect()).collect();
    let g_diff: Vec<Vec<f64>> =
        (1..k).map(|j| g1.iter().zip(grads.row(j)).map(|(a, b)| a - b).collect()).collect();
    // d = g1 − Σ_{j≥2} α_j (g1 − g_j) and U d = 0 give (U Dᵀ) α = U g1.
    let n = k - 1;
    let mut system = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            system.set(i, j, math::dot(&u_diff[i], &g_diff[j]));
        }
    }
    let rhs: Vec<f64> = u_diff.iter().map(|u| math::dot(u, g1)).collect();
    // pivots are judged against the gradient scale, so collinear rows (whose
    // unit differences are pure roundoff) count as singular
    let g_scale = grads.rows().map(math::norm).fold(0.0, f64::max);
    let entry_scale = (0..n).flat_map(|i| system.row(i).to_vec()).fold(0.0_f64, |m, v| m.max(v.abs())).max(EPS);
    let (alpha, fallback) = match math::solve(&system, &rhs, 1e-10 * g_scale / entry_scale) {
        Some(tail) if tail.iter().all(|v| v.is_finite()) => {
            let mut alpha = Vec::with_capacity(k);
            alpha.push(1.0 - tail.iter().sum::<f64>());
            alpha.extend(tail);
            (alpha, false)
        }
        _ => (vec![1.0 / k as f64; k], true),
    };
    Ok(ImtlOutput { direction: grads.combine(&alpha), alpha, fallback })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NashOutput {
    /// Nonnegative bargaining weights, not normalized.
    pub weights: Vec<f64>,
    pub direction: Vec<f64>,
    /// Largest `|w_k (GGᵀw)_k − 1|`.
    pub residual: f64,
}

const NASH_RIDGE: f64 = 1e-8;
const NASH_LIMIT: f64 = 1e8;

/// Nash bargaining weights: `w > 0` with `(GGᵀ w)_k = 1/w_k`.
///
/// The condition is the stationarity of the strictly convex potential
/// `½wᵀMw − Σ ln w_k` (`M` the ridge-regularized Gram), which is minimized
/// by damped Newton steps kept inside the positive orthant.
pub fn nash_weights(
    grads: &GradientMatrix,
    max_iters: usize,
    warm: Option<&[f64]>,
) -> Result<NashOutput, BalanceError> {
    let k = grads.n_tasks();
    let mut m = grads.gram();
    for i in 0..k {
        m.set(i, i, m.get(i, i) + NASH_RIDGE);
    }
    let potential = |w: &[f64]| 0.5 * m.quad(w) - w.iter().map(|v| math::ln(*v)).sum::<f64>();
    let mut w = match warm {
        Some(w) if w.len() == k && w.iter().all(|v| *v > 0.0 && v.is_finite()) => w.to_vec(),
        _ => vec![1.0; k],
    };
    for _ in 0..max_iters {
        let mw = m.mul_vec(&w);
        let grad: Vec<f64> = (0..k).map(|i| mw[i] - 1.0 / w[i]).collect();
        if grad.iter().zip(&w).all(|(g, v)| (g * v).abs() <= 1e-14) {
            break;
        }
        let mut hess = m.clone();
        for i in 0..k {
            hess.set(i, i, hess.get(i, i) + 1.0 / (w[i] * w[i]));
        }
        let Some(step) = math::solve(&hess, &grad, 0.0) else {
            break;
        };
        let decrement = math::dot(&grad, &step);
        let current = potential(&w);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let next: Vec<f64> = w.iter().zip(&step).map(|(v, s)| v - t * s).collect();
            if next.iter().all(|v| *v > 0.0) && potential(&next) <= current - 0.25 * t * decrement {
                w = next;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if let Some(big) = w.iter().copied().find(|v| *v > NASH_LIMIT || !v.is_finite()) {
            return Err(BalanceError::NashDivergence(big));
        }
        if !moved {
            break;
        }
    }
    let mw = m.mul_vec(&w);
    let residual = w.iter().zip(&mw).map(|(a, b)| (a * b - 1.0).abs()).fold(0.0, f64::max);
    Ok(NashOutput { direction: grads.combine(&w), weights: w, residual })
}

/// FAMO logits and the losses seen at the previous call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamoState {
    pub logits: Vec<f64>,
    pub prev_losses: Option<Vec<f64>>,
}

impl FamoState {
    pub fn new(k: usize) -> Self {
        Self { logits: vec![0.0; k], prev_losses: None }
    }

    pub fn weights(&self) -> SimplexWeights {
        SimplexWeights::normalized(math::softmax(&self.logits))
    }
}

/// One FAMO call: first folds in the log-loss improvement since the
/// previous call, then returns `softmax(ξ)` and remembers `losses`.
///
/// With `δ_k = log L_k(prev) − log L_k(curr)` the logits move by
/// `ξ_j −= lr · w_j (δ_j − Σ_k w_k δ_k)`, shifting weight toward tasks that
/// improved least.
pub fn famo_step(state: &mut FamoState, losses: &[f64], lr: f64) -> Result<SimplexWeights, BalanceError> {
    require_positive(losses)?;
    if state.logits.len() != losses.len() {
        return Err(BalanceError::TaskCount { expected: state.logits.len(), got: losses.len() });
    }
    if let Some(prev) = &state.prev_losses {
        let w = math::softmax(&state.logits);
        let delta: Vec<f64> = prev.iter().zip(losses).map(|(p, c)| math::ln(*p) - math::ln(*c)).collect();
        let mean = math::dot(&w, &delta);
        for j in 0..w.len() {
            state.logits[j] -= lr * w[j] * (delta[j] - mean);
        }
    }
    state.prev_losses = Some(losses.to_vec());
    Ok(state.weights())
}
