//! Scalarizations: reduce the loss vector to one objective.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{require_positive, Memory, Preference};
use crate::error::BalanceError;
use crate::math::{self, EPS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarizeKind {
    Ls,
    Sils,
    /// Weighted Chebyshev; `mu = 0` is the hard max.
    Chebyshev { mu: f64 },
    Rlw,
    Uncertainty,
    Dwa { temperature: f64 },
}

/// A scalar objective with its loss-space gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalarized {
    pub value: f64,
    /// `∂value/∂L_k`.
    pub loss_weights: Vec<f64>,
    /// `∂value/∂s_k` for uncertainty weighting's log-variances.
    pub aux_gradient: Option<Vec<f64>>,
}

pub fn scalarize<R: Rng + ?Sized>(
    kind: ScalarizeKind,
    losses: &[f64],
    pref: &Preference,
    memory: &mut Memory,
    rng: &mut R,
) -> Result<Scalarized, BalanceError> {
    let k = losses.len();
    let weighted = |w: Vec<f64>| Scalarized { value: math::dot(&w, losses), loss_weights: w, aux_gradient: None };
    Ok(match kind {
        ScalarizeKind::Ls => weighted(pref.ray().to_vec()),
        ScalarizeKind::Sils => {
            require_positive(losses)?;
            let r = pref.ray();
            Scalarized {
                value: r.iter().zip(losses).map(|(r, l)| r * math::ln(*l)).sum(),
                loss_weights: r.iter().zip(losses).map(|(r, l)| r / l.max(EPS)).collect(),
                aux_gradient: None,
            }
        }
        ScalarizeKind::Chebyshev { mu } => {
            let (value, active) = chebyshev(losses, pref, mu);
            let loss_weights = active.iter().zip(pref.ray()).map(|(a, r)| a * r).collect();
            Scalarized { value, loss_weights, aux_gradient: None }
        }
        ScalarizeKind::Rlw => {
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            weighted(math::softmax(&z))
        }
        ScalarizeKind::Uncertainty => {
            let Memory::Uncertainty { log_vars } = memory else {
                return Err(BalanceError::InvalidParameter("uncertainty state missing".into()));
            };
            if log_vars.len() != k {
                return Err(BalanceError::TaskCount { expected: log_vars.len(), got: k });
            }
            let precision: Vec<f64> = log_vars.iter().map(|s| math::exp(-s)).collect();
            Scalarized {
                value: (0..k).map(|i| 0.5 * (precision[i] * losses[i] + log_vars[i])).sum(),
                loss_weights: precision.iter().map(|p| 0.5 * p).collect(),
                aux_gradient: Some((0..k).map(|i| 0.5 * (1.0 - precision[i] * losses[i])).collect()),
            }
        }
        ScalarizeKind::Dwa { temperature } => {
            let Memory::Dwa { history } = memory else {
                return Err(BalanceError::InvalidParameter("dwa state missing".into()));
            };
            let w = if history.len() < 2 {
                vec![1.0; k]
            } else {
                let (older, newer) = (&history[0], &history[1]);
                let ratios: Vec<f64> = (0..k).map(|i| newer[i] / older[i].max(EPS) / temperature).collect();
                math::softmax(&ratios).into_iter().map(|v| v * k as f64).collect()
            };
            history.push(losses.to_vec());
            if history.len() > 2 {
                history.remove(0);
            }
            weighted(w)
        }
    })
}

/// Weighted Chebyshev value `max_k r_k (L_k − z_k)` (or its log-sum-exp
/// smoothing with sharpness `mu`) and the active weights: argmax indicator
/// with ties split evenly, or the softmax.
pub fn chebyshev(losses: &[f64], pref: &Preference, mu: f64) -> (f64, Vec<f64>) {
    let terms: Vec<f64> =
        losses.iter().zip(pref.ray()).zip(pref.ideal()).map(|((l, r), z)| r * (l - z)).collect();
    if mu > 0.0 {
        let scaled: Vec<f64> = terms.iter().map(|t| mu * t).collect();
        (math::logsumexp(&scaled) / mu, math::softmax(&scaled))
    } else {
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = terms.iter().filter(|t| **t == max).count() as f64;
        (max, terms.iter().map(|t| if *t == max { 1.0 / ties } else { 0.0 }).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(kind: ScalarizeKind, losses: &[f64], memory: &mut Memory) -> Scalarized {
        let pref = Preference::uniform(losses.len());
        scalarize(kind, losses, &pref, memory, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn chebyshev_hard_example() {
        let pref = Preference::new(vec![0.5, 0.5]).unwrap();
        let (v, a) = chebyshev(&[2.0, 4.0], &pref, 0.0);
        assert_eq!(v, 2.0);
        assert_eq!(a, vec![0.0, 1.0]);
    }

    #[test]
    fn chebyshev_ties_split() {
        let pref = Preference::uniform(3);
        let (_, a) = chebyshev(&[3.0, 1.0, 3.0], &pref, 0.0);
        assert_eq!(a, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn dwa_constant_history_is_uniform() {
        let mut m = Memory::Dwa { history: Vec::new() };
        for _ in 0..4 {
            let s = run(ScalarizeKind::Dwa { temperature: 2.0 }, &[0.7, 1.3], &mut m);
            assert!(s.loss_weights.iter().all(|w| (w - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn dwa_upweights_slow_task() {
        let mut m = Memory::Dwa { history: vec![vec![1.0, 1.0], vec![1.0, 0.5]] };
        let s = run(ScalarizeKind::Dwa { temperature: 2.0 }, &[1.0, 0.25], &mut m);
        assert!(s.loss_weights[0] > 1.0 && s.loss_weights[1] < 1.0);
        assert!((s.loss_weights.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_at_zero_is_half_sum() {
        let mut m = Memory::Uncertainty { log_vars: vec![0.0; 3] };
        let s = run(ScalarizeKind::Uncertainty, &[1.0, 2.0, 3.0], &mut m);
        assert_eq!(s.value, 3.0);
        assert_eq!(s.aux_gradient.unwrap(), vec![0.0, -0.5, -1.0]);
    }

    #[test]
    fn rlw_weights_lie_on_the_simplex() {
        let mut m = Memory::Stateless;
        let s = run(ScalarizeKind::Rlw, &[1.0, 2.0, 3.0], &mut m);
        assert!((s.loss_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sils_rejects_zero_loss() {
        let pref = Preference::uniform(2);
        let err = scalarize(ScalarizeKind::Sils, &[0.0, 1.0], &pref, &mut Memory::Stateless, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(BalanceError::NonPositiveLoss { task: 0, .. })));
    }
}
