//! Preference-guided directions: EPO, WC-MGDA, epsilon-constraint, and the
//! log-gradient transform.

use alloc::vec;
use alloc::vec::Vec;

use super::{min_norm_weights, require_positive, simplex_qp, GradientMatrix, Preference};
use crate::error::BalanceError;
use crate::math::{self, Matrix, EPS};

/// Row `k` becomes `g_k / L_k`, the gradient of `log L_k`.
pub fn log_transform(grads: &GradientMatrix, losses: &[f64]) -> Result<GradientMatrix, BalanceError> {
    require_positive(losses)?;
    let inv: Vec<f64> = losses.iter().map(|l| 1.0 / l.max(EPS)).collect();
    Ok(grads.scale_rows(&inv))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpoMode {
    /// Move toward the preference ray.
    Balance,
    /// On the ray: plain min-norm descent.
    Descent,
    /// The balance LP had no feasible vertex; min-norm was used instead.
    Fallback,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpoOutput {
    pub direction: Vec<f64>,
    pub weights: Vec<f64>,
    pub mode: EpoMode,
    /// `KL(p ‖ uniform)` for `p ∝ r ⊙ L`.
    pub nonuniformity: f64,
}

const EPO_TOL: f64 = 1e-3;

/// Exact Pareto optimal search direction.
///
/// With `p = r⊙L / Σ r⊙L` and `ν = KL(p ‖ 1/K)`, the adjustment
/// `a = r ⊙ (log(K p) − ν)` points along the gradient of `ν`. Off the ray
/// (`ν > 1e-3`) the weights maximize `βᵀ C a` (`C = GGᵀ`) over the simplex
/// while keeping the worst weighted loss from ascending; on the ray they are
/// the min-norm weights.
pub fn epo_direction(grads: &GradientMatrix, losses: &[f64], pref: &Preference) -> Result<EpoOutput, BalanceError> {
    require_positive(losses)?;
    let k = grads.n_tasks();
    let r = pref.ray();
    let rl: Vec<f64> = r.iter().zip(losses).map(|(a, b)| a * b).collect();
    let total: f64 = rl.iter().sum();
    let p: Vec<f64> = rl.iter().map(|v| v / total).collect();
    let nu: f64 = p.iter().map(|pk| pk * math::ln(pk * k as f64)).sum();
    let descent = |mode| {
        let w = min_norm_weights(grads).into_vec();
        EpoOutput { direction: grads.combine(&w), weights: w, mode, nonuniformity: nu }
    };
    if nu <= EPO_TOL {
        return Ok(descent(EpoMode::Descent));
    }
    let a: Vec<f64> = (0..k).map(|i| r[i] * (math::ln(p[i] * k as f64) - nu)).collect();
    let c = grads.gram();
    let ca = c.mul_vec(&a);
    let worst = rl.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut rhs: Vec<Option<f64>> = if ca.iter().any(|v| *v > 0.0) {
        ca.iter().map(|v| if *v > 0.0 { None } else { Some(*v) }).collect()
    } else {
        vec![Some(0.0); k]
    };
    for (j, v) in rl.iter().enumerate() {
        if *v == worst {
            rhs[j] = Some(0.0);
        }
    }
    match simplex_lp(&ca, &c, &rhs) {
        Some(w) => Ok(EpoOutput { direction: grads.combine(&w), weights: w, mode: EpoMode::Balance, nonuniformity: nu }),
        None => Ok(descent(EpoMode::Fallback)),
    }
}

/// Maximizes `objᵀβ` over the simplex subject to `(Cβ)_j ≥ rhs_j` for every
/// `Some` entry, by enumerating vertices. `None` when infeasible.
fn simplex_lp(obj: &[f64], c: &Matrix, rhs: &[Option<f64>]) -> Option<Vec<f64>> {
    let k = obj.len();
    let scale = c.data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    // Inequalities as (row, bound): β_i ≥ 0 first, then the C rows.
    let mut rows: Vec<(Vec<f64>, f64)> = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            (e, 0.0)
        })
        .collect();
    for (j, b) in rhs.iter().enumerate() {
        if let Some(b) = b {
            rows.push((c.row(j).to_vec(), *b));
        }
    }
    let feasible = |beta: &[f64]| rows.iter().all(|(row, b)| math::dot(row, beta) >= b - tol);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen: Vec<usize> = (0..k - 1).collect();
    loop {
        let mut m = Matrix::zeros(k, k);
        let mut b = vec![0.0; k];
        for j in 0..k {
            m.set(0, j, 1.0);
        }
        b[0] = 1.0;
        for (slot, &idx) in chosen.iter().enumerate() {
            for j in 0..k {
                m.set(slot + 1, j, rows[idx].0[j]);
            }
            b[slot + 1] = rows[idx].1;
        }
        if let Some(beta) = math::solve(&m, &b, 1e-12) {
            if beta.iter().all(|v| v.is_finite()) && feasible(&beta) {
                let value = math::dot(obj, &beta);
                if best.as_ref().is_none_or(|(v, _)| value > *v + 1e-15) {
                    best = Some((value, beta));
                }
            }
        }
        if !next_combination(&mut chosen, rows.len()) {
            break;
        }
    }
    best.map(|(_, beta)| {
        let mut beta: Vec<f64> = beta.into_iter().map(|v| v.max(0.0)).collect();
        let s: f64 = beta.iter().sum();
        beta.iter_mut().for_each(|v| *v /= s);
        beta
    })
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Clone, Debug, PartialEq)]
pub struct WcMgdaOutput {
    pub direction: Vec<f64>,
    /// Coefficient of each raw gradient row in `direction` (`λ_k r_k`).
    pub weights: Vec<f64>,
    /// Simplex weights over the Chebyshev objectives.
    pub dual: Vec<f64>,
}

const WC_MGDA_ITERS: usize = 2000;

/// Min-norm step on the Chebyshev-weighted objectives `r_k (L_k − z_k)`.
///
/// Solves the dual of the linearized proximal problem
/// `min_d max_k [r_k(L_k − z_k) − r_k g_kᵀd] + ½‖d‖²`: maximize
/// `Σλ_k r_k(L_k − z_k) − ½‖Σλ_k r_k g_k‖²` over the simplex and return
/// `d = Σλ_k r_k g_k`. With equal weighted losses this is the min-norm point
/// of the reweighted rows; when one objective dominates it is that row.
pub fn wc_mgda_direction(grads: &GradientMatrix, losses: &[f64], pref: &Preference) -> WcMgdaOutput {
    let k = grads.n_tasks();
    let r = pref.ray();
    let c = grads.gram();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m.set(i, j, r[i] * r[j] * c.get(i, j));
        }
    }
    let lin: Vec<f64> = (0..k).map(|i| r[i] * (losses[i] - pref.ideal()[i])).collect();
    let dual = simplex_qp(&m, &lin, WC_MGDA_ITERS);
    let weights: Vec<f64> = dual.iter().zip(r).map(|(l, r)| l * r).collect();
    WcMgdaOutput { direction: grads.combine(&weights), weights, dual }
}

/// Epsilon-constraint step for `min L_p s.t. L_k ≤ eps_k`: multipliers move
/// by `λ_k ← max(0, λ_k + ρ(L_k − eps_k))`, then `d = g_p + Σ_{k≠p} λ_k g_k`.
pub fn ec_direction(
    grads: &GradientMatrix,
    losses: &[f64],
    primary: usize,
    eps: &[f64],
    rho: f64,
    multipliers: &mut [f64],
) -> Result<Vec<f64>, BalanceError> {
    let k = grads.n_tasks();
    if eps.len() != k || multipliers.len() != k {
        return Err(BalanceError::TaskCount { expected: k, got: eps.len().min(multipliers.len()) });
    }
    if primary >= k {
        return Err(BalanceError::InvalidParameter(alloc::format!("primary task {primary} out of range")));
    }
    if (0..k).any(|i| i != primary && !(eps[i] > 0.0)) {
        return Err(BalanceError::InvalidParameter("ec bounds must be positive".into()));
    }
    for i in 0..k {
        multipliers[i] = if i == primary { 0.0 } else { (multipliers[i] + rho * (losses[i] - eps[i])).max(0.0) };
    }
    let mut coef = multipliers.to_vec();
    coef[primary] = 1.0;
    Ok(grads.combine(&coef))
}
