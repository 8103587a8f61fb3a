//! Mask-aware ranking losses built from tape ops.
//!
//! Pointwise kinds average over the real items of a list, pairwise kinds
//! average over ordered pairs with `y_i > y_j`, and listwise kinds use the
//! plain per-list value. The batch loss is the mean over lists that
//! contribute at least one term. Padding never enters: each list's real
//! scores are gathered out of the `(B × L)` score matrix before any loss
//! arithmetic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::TensorError;
use crate::math;
use crate::tensor::Tensor;

fn default_sigma() -> f64 {
    1.0
}
fn default_temperature() -> f64 {
    1.0
}
fn default_margin() -> f64 {
    1.0
}
fn default_max_label() -> f64 {
    4.0
}
fn default_cutoff() -> usize {
    30
}

/// One task's surrogate loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LossSpec {
    #[serde(rename = "mse")]
    Mse,
    /// Sigmoid cross-entropy against labels scaled by `max_label` into [0, 1].
    #[serde(rename = "ordinal-bce")]
    OrdinalBce {
        #[serde(default = "default_max_label")]
        max_label: f64,
    },
    #[serde(rename = "ranknet")]
    RankNet {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// RankNet pairs weighted by |ΔNDCG@cutoff| of swapping the two items.
    #[serde(rename = "lambdarank")]
    LambdaRank {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_cutoff")]
        cutoff: usize,
    },
    #[serde(rename = "rank-hinge")]
    RankHinge {
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// Cross-entropy between top-one distributions of labels and scores.
    #[serde(rename = "listnet")]
    ListNet,
    /// Plackett–Luce likelihood of the label-sorted permutation.
    #[serde(rename = "listmle")]
    ListMle,
    /// Softmax cross-entropy with label-proportional targets.
    #[serde(rename = "softmax-ce")]
    SoftmaxCe,
    /// One minus a smooth NDCG with sigmoid rank approximation.
    #[serde(rename = "approx-ndcg")]
    ApproxNdcg {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::RankNet { sigma: default_sigma() }
    }
}

impl LossSpec {
    /// All nine kinds with their default parameters.
    pub fn all_defaults() -> Vec<LossSpec> {
        vec![
            LossSpec::Mse,
            LossSpec::OrdinalBce { max_label: default_max_label() },
            LossSpec::RankNet { sigma: 1.0 },
            LossSpec::LambdaRank { sigma: 1.0, cutoff: default_cutoff() },
            LossSpec::RankHinge { margin: 1.0 },
            LossSpec::ListNet,
            LossSpec::ListMle,
            LossSpec::SoftmaxCe,
            LossSpec::ApproxNdcg { temperature: 1.0 },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Mse => "mse",
            LossSpec::OrdinalBce { .. } => "ordinal-bce",
            LossSpec::RankNet { .. } => "ranknet",
            LossSpec::LambdaRank { .. } => "lambdarank",
            LossSpec::RankHinge { .. } => "rank-hinge",
            LossSpec::ListNet => "listnet",
            LossSpec::ListMle => "listmle",
            LossSpec::SoftmaxCe => "softmax-ce",
            LossSpec::ApproxNdcg { .. } => "approx-ndcg",
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let bad = |what: &str, v: f64| {
            Err(TensorError::InvalidArgument(format!("{}: {what} must be positive, got {v}", self.name())))
        };
        match *self {
            LossSpec::OrdinalBce { max_label } if !(max_label > 0.0) => bad("max_label", max_label),
            LossSpec::RankNet { sigma } | LossSpec::LambdaRank { sigma, .. } if !(sigma > 0.0) => {
                bad("sigma", sigma)
            }
            LossSpec::LambdaRank { cutoff: 0, .. } => {
                Err(TensorError::InvalidArgument("lambdarank: cutoff must be at least 1".into()))
            }
            LossSpec::RankHinge { margin } if !(margin > 0.0) => bad("margin", margin),
            LossSpec::ApproxNdcg { temperature } if !(temperature > 0.0) => {
                bad("temperature", temperature)
            }
            _ => Ok(()),
        }
    }

    fn is_pointwise(&self) -> bool {
        matches!(self, LossSpec::Mse | LossSpec::OrdinalBce { .. })
    }
}

/// Mean loss over the lists of a batch.
///
/// `scores` is a `(B × L)` node; `labels` and `mask` are row-major `B·L`
/// slices (one task's labels). Returns a tape-attached scalar.
pub fn loss(
    tape: &mut Tape,
    spec: &LossSpec,
    scores: NodeId,
    labels: &[f64],
    mask: &[bool],
) -> Result<NodeId, TensorError> {
    spec.validate()?;
    let shape = tape.value(scores).shape().to_vec();
    if shape.len() != 2 || labels.len() != shape[0] * shape[1] || mask.len() != labels.len() {
        return Err(TensorError::ShapeMismatch {
            op: "loss",
            lhs: shape,
            rhs: vec![labels.len(), mask.len()],
        });
    }
    let (batch, len) = (shape[0], shape[1]);
    let column = tape.reshape(scores, &[batch * len, 1])?;
    let mut terms = Vec::new();
    for b in 0..batch {
        let real: Vec<usize> = (b * len..(b + 1) * len).filter(|&i| mask[i]).collect();
        if real.is_empty() {
            continue;
        }
        let y: Vec<f64> = real.iter().map(|&i| labels[i]).collect();
        if !spec.is_pointwise() && !has_label_spread(&y) {
            continue;
        }
        let s = tape.gather_rows(column, &real)?;
        if let Some(term) = list_loss(tape, spec, s, &y)? {
            terms.push(tape.reshape(term, &[1])?);
        }
    }
    if terms.is_empty() {
        // no list contributes: a zero that still hangs off the scores
        let total = tape.sum(scores, None)?;
        return tape.scale(total, 0.0);
    }
    let n = terms.len();
    let stacked = tape.concat(&terms, 0)?;
    let total = tape.sum(stacked, None)?;
    let out = tape.scale(total, 1.0 / n as f64)?;
    if !tape.value(out).data()[0].is_finite() {
        return Err(TensorError::NonFinite { op: "loss" });
    }
    Ok(out)
}

fn has_label_spread(y: &[f64]) -> bool {
    y.len() >= 2 && y.iter().any(|v| *v != y[0])
}

/// Per-list loss on an `(n × 1)` column of real scores.
fn list_loss(
    tape: &mut Tape,
    spec: &LossSpec,
    s: NodeId,
    y: &[f64],
) -> Result<Option<NodeId>, TensorError> {
    let n = y.len();
    let out = match *spec {
        LossSpec::Mse => {
            let target = tape.leaf(Tensor::matrix(n, 1, y.to_vec()));
            let diff = tape.sub(s, target)?;
            let sq = tape.mul(diff, diff)?;
            tape.mean(sq, None)?
        }
        LossSpec::OrdinalBce { max_label } => {
            let scaled: Vec<f64> = y.iter().map(|v| (v / max_label).clamp(0.0, 1.0)).collect();
            let target = tape.leaf(Tensor::matrix(n, 1, scaled));
            let sp = softplus(tape, s)?;
            let ys = tape.mul(target, s)?;
            let per_item = tape.sub(sp, ys)?;
            tape.mean(per_item, None)?
        }
        LossSpec::RankNet { sigma } => {
            let w = pair_weights(y, None);
            let d = pairwise_diff(tape, s, n)?;
            let neg = tape.scale(d, -sigma)?;
            let sp = softplus(tape, neg)?;
            weighted_sum(tape, sp, w, n)?
        }
        LossSpec::LambdaRank { sigma, cutoff } => {
            let current: Vec<f64> = tape.value(s).data().to_vec();
            let delta = lambda_weights(y, &current, cutoff);
            let w = pair_weights(y, Some(&delta));
            let d = pairwise_diff(tape, s, n)?;
            let neg = tape.scale(d, -sigma)?;
            let sp = softplus(tape, neg)?;
            weighted_sum(tape, sp, w, n)?
        }
        LossSpec::RankHinge { margin } => {
            let w = pair_weights(y, None);
            let d = pairwise_diff(tape, s, n)?;
            let m = tape.leaf(Tensor::scalar(margin));
            let gap = tape.sub(m, d)?;
            let hinge = tape.relu(gap)?;
            weighted_sum(tape, hinge, w, n)?
        }
        LossSpec::ListNet => {
            let target = math::softmax(y);
            cross_entropy(tape, s, target, n)?
        }
        LossSpec::SoftmaxCe => {
            let total: f64 = y.iter().sum();
            if !(total > 0.0) {
                return Ok(None);
            }
            let target = y.iter().map(|v| v / total).collect();
            cross_entropy(tape, s, target, n)?
        }
        LossSpec::ListMle => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
            let sorted = tape.gather_rows(s, &order)?;
            let row = tape.reshape(sorted, &[1, n])?;
            let zeros = tape.leaf(Tensor::zeros(&[n, 1]));
            let grid = tape.add(zeros, row)?;
            // row i keeps positions j >= i
            let mask: Vec<bool> = (0..n * n).map(|idx| idx % n < idx / n).collect();
            let suffix = tape.masked_fill(grid, &mask, f64::NEG_INFINITY)?;
            let lse = tape.logsumexp(suffix)?;
            let flat = tape.reshape(sorted, &[n])?;
            let nll = tape.sub(lse, flat)?;
            tape.sum(nll, None)?
        }
        LossSpec::ApproxNdcg { temperature } => {
            let idcg = ideal_dcg(y, n);
            if !(idcg > 0.0) {
                return Ok(None);
            }
            let d = pairwise_diff(tape, s, n)?;
            let scaled = tape.scale(d, 1.0 / temperature)?;
            // sigmoid((s_j - s_i)/T) = exp(-softplus((s_i - s_j)/T))
            let sp = softplus(tape, scaled)?;
            let neg = tape.scale(sp, -1.0)?;
            let sig = tape.exp(neg)?;
            let rowsum = tape.sum(sig, Some(1))?;
            // diagonal contributed sigmoid(0) = 1/2; rank = 1 + off-diagonal sum
            let half = tape.leaf(Tensor::scalar(1.5));
            let one_plus_rank = tape.add(rowsum, half)?;
            let log_term = tape.log(one_plus_rank)?;
            let loglog = tape.log(log_term)?;
            let shift = tape.leaf(Tensor::scalar(math::ln(core::f64::consts::LN_2)));
            let arg = tape.sub(shift, loglog)?;
            let inv_discount = tape.exp(arg)?;
            let gains: Vec<f64> = y.iter().map(|v| gain(*v) / idcg).collect();
            let g = tape.leaf(Tensor::vector(gains));
            let contrib = tape.mul(inv_discount, g)?;
            let approx = tape.sum(contrib, None)?;
            let neg_approx = tape.scale(approx, -1.0)?;
            let one = tape.leaf(Tensor::scalar(1.0));
            tape.add(neg_approx, one)?
        }
    };
    Ok(Some(out))
}

/// `log(1 + exp(x))` elementwise, as `logsumexp([0, x])`.
fn softplus(tape: &mut Tape, x: NodeId) -> Result<NodeId, TensorError> {
    let mut shape = tape.value(x).shape().to_vec();
    shape.push(1);
    let col = tape.reshape(x, &shape)?;
    let zeros = tape.leaf(Tensor::zeros(&shape));
    let pair = tape.concat(&[zeros, col], shape.len() - 1)?;
    tape.logsumexp(pair)
}

/// `D[i][j] = s_i - s_j` from an `(n × 1)` column.
fn pairwise_diff(tape: &mut Tape, s: NodeId, n: usize) -> Result<NodeId, TensorError> {
    let row = tape.reshape(s, &[1, n])?;
    tape.sub(s, row)
}

/// Weights of ordered pairs `y_i > y_j`, normalized to a mean over pairs,
/// optionally scaled per pair.
fn pair_weights(y: &[f64], scale: Option<&[f64]>) -> Vec<f64> {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if y[i] > y[j] {
                w[i * n + j] = scale.map_or(1.0, |s| s[i * n + j]);
                count += 1;
            }
        }
    }
    if count > 0 {
        w.iter_mut().for_each(|v| *v /= count as f64);
    }
    w
}

fn weighted_sum(tape: &mut Tape, x: NodeId, w: Vec<f64>, n: usize) -> Result<NodeId, TensorError> {
    let wn = tape.leaf(Tensor::matrix(n, n, w));
    let prod = tape.mul(x, wn)?;
    tape.sum(prod, None)
}

/// `logsumexp(s) - Σ p_i s_i` for a target distribution `p`.
fn cross_entropy(tape: &mut Tape, s: NodeId, p: Vec<f64>, n: usize) -> Result<NodeId, TensorError> {
    let flat = tape.reshape(s, &[n])?;
    let lse = tape.logsumexp(flat)?;
    let target = tape.leaf(Tensor::vector(p));
    let weighted = tape.mul(flat, target)?;
    let expected = tape.sum(weighted, None)?;
    tape.sub(lse, expected)
}

fn gain(label: f64) -> f64 {
    math::powf(2.0, label) - 1.0
}

fn discount(position: usize) -> f64 {
    1.0 / math::log2(position as f64 + 2.0)
}

fn ideal_dcg(y: &[f64], k: usize) -> f64 {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).enumerate().map(|(p, v)| gain(*v) * discount(p)).sum()
}

/// Pairwise `|ΔNDCG@k|` from swapping items `i` and `j` in the ordering
/// induced by `scores` (descending, ties by ascending index).
///
/// Returns a row-major `L × L` matrix, symmetric with a zero diagonal.
pub fn lambda_weights(labels: &[f64], scores: &[f64], k: usize) -> Vec<f64> {
    let n = labels.len();
    assert_eq!(n, scores.len(), "labels and scores must align");
    let mut out = vec![0.0; n * n];
    let idcg = ideal_dcg(labels, k.max(1));
    if !(idcg > 0.0) {
        return out;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut position = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }
    let disc = |p: usize| if p < k { discount(p) } else { 0.0 };
    for i in 0..n {
        for j in i + 1..n {
            let delta = ((gain(labels[i]) - gain(labels[j])) * (disc(position[i]) - disc(position[j]))).abs()
                / idcg;
            out[i * n + j] = delta;
            out[j * n + i] = delta;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(spec: &LossSpec, scores: &[f64], labels: &[f64], mask: &[bool], b: usize) -> (f64, Vec<f64>) {
        let l = scores.len() / b;
        let mut t = Tape::new();
        let s = t.leaf(Tensor::matrix(b, l, scores.to_vec()));
        let out = loss(&mut t, spec, s, labels, mask).unwrap();
        let g = t.backward(out).unwrap().wrt(s);
        (t.value(out).data()[0], g.into_data())
    }

    #[test]
    fn mse_is_zero_at_perfect_fit() {
        let y = [2.0, 0.0, 1.0];
        let (v, _) = eval(&LossSpec::Mse, &y, &y, &[true; 3], 1);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ranknet_large_gap() {
        let (v, _) = eval(&LossSpec::RankNet { sigma: 1.0 }, &[20.0, 0.0], &[1.0, 0.0], &[true; 2], 1);
        let expect = math::ln_1p(math::exp(-20.0));
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn listnet_gradient_vanishes_at_shifted_labels() {
        let y = [3.0, 1.0, 0.0, 2.0];
        let s: Vec<f64> = y.iter().map(|v| v + 7.5).collect();
        let (_, g) = eval(&LossSpec::ListNet, &s, &y, &[true; 4], 1);
        assert!(math::norm(&g) <= 1e-8);
    }

    #[test]
    fn lambda_weights_two_items_wrong_order() {
        let w = lambda_weights(&[1.0, 0.0], &[0.0, 1.0], 2);
        // ideal DCG = 1, current DCG = 1/log2(3)
        let deficit = 1.0 - 1.0 / math::log2(3.0);
        assert!((w[1] - deficit).abs() < 1e-15 && (w[2] - deficit).abs() < 1e-15);
        assert_eq!((w[0], w[3]), (0.0, 0.0));
    }

    #[test]
    fn lambda_weights_equal_labels_is_zero() {
        assert!(lambda_weights(&[2.0; 4], &[0.1, 0.4, 0.3, 0.2], 3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lists_without_spread_contribute_nothing() {
        // second list has tied labels and is skipped; mean is over one list
        let scores = [0.5, 0.1, 0.3, 0.2];
        let labels = [1.0, 0.0, 1.0, 1.0];
        let (both, _) = eval(&LossSpec::RankNet { sigma: 1.0 }, &scores, &labels, &[true; 4], 2);
        let (first, _) = eval(&LossSpec::RankNet { sigma: 1.0 }, &scores[..2], &labels[..2], &[true; 2], 1);
        assert!((both - first).abs() < 1e-15);
    }

    #[test]
    fn no_valid_list_gives_zero_loss() {
        let (v, g) = eval(&LossSpec::ListNet, &[0.3, 0.1], &[1.0, 1.0], &[true; 2], 1);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(LossSpec::ApproxNdcg { temperature: 0.0 }.validate().is_err());
        assert!(LossSpec::LambdaRank { sigma: 1.0, cutoff: 0 }.validate().is_err());
        assert!(LossSpec::RankNet { sigma: -1.0 }.validate().is_err());
        assert!(LossSpec::ListMle.validate().is_ok());
    }

    #[test]
    fn listmle_matches_direct_plackett_luce() {
        let s = [0.2, -0.4, 1.1];
        let y = [1.0, 2.0, 1.0];
        // target order: item 1, then ties 0 before 2
        let order = [1usize, 0, 2];
        let mut expect = 0.0;
        for i in 0..3 {
            let rest: Vec<f64> = order[i..].iter().map(|&j| s[j]).collect();
            expect += math::logsumexp(&rest) - s[order[i]];
        }
        let (v, _) = eval(&LossSpec::ListMle, &s, &y, &[true; 3], 1);
        assert!((v - expect).abs() < 1e-12);
    }
}
