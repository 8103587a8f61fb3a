//! Gradient surgery: PCGrad projection and GradDrop sign dropout.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::GradientMatrix;
use crate::math::{self, EPS};

/// Projected rows and, for each task, the last task it was projected onto.
#[derive(Clone, Debug, PartialEq)]
pub struct PcGradOutput {
    pub rows: Vec<Vec<f64>>,
    pub last_projection: Vec<Option<usize>>,
    pub direction: Vec<f64>,
}

/// PCGrad: each task gradient is projected off the normal plane of every
/// conflicting task gradient (in random order), then the results are averaged.
pub fn pcgrad<R: Rng + ?Sized>(grads: &GradientMatrix, rng: &mut R) -> Vec<f64> {
    pcgrad_detailed(grads, rng).direction
}

pub fn pcgrad_detailed<R: Rng + ?Sized>(grads: &GradientMatrix, rng: &mut R) -> PcGradOutput {
    let k = grads.n_tasks();
    let sq: Vec<f64> = grads.rows().map(|r| math::dot(r, r)).collect();
    let mut rows = Vec::with_capacity(k);
    let mut last_projection = Vec::with_capacity(k);
    for i in 0..k {
        let mut g = grads.row(i).to_vec();
        let mut others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        others.shuffle(rng);
        let mut last = None;
        for j in others {
            let gj = grads.row(j);
            let inner = math::dot(&g, gj);
            if inner < 0.0 && sq[j] > EPS {
                math::axpy(-inner / sq[j], gj, &mut g);
                last = Some(j);
            }
        }
        rows.push(g);
        last_projection.push(last);
    }
    let mut direction = vec![0.0; grads.cols()];
    for r in &rows {
        math::axpy(1.0 / k as f64, r, &mut direction);
    }
    PcGradOutput { rows, last_projection, direction }
}

/// GradDrop: per coordinate, keep only the positive or only the negative
/// task contributions, chosen at random with probability given by the sign
/// purity `P = ½(1 + Σg / Σ|g|)`.
pub fn graddrop<R: Rng + ?Sized>(grads: &GradientMatrix, rng: &mut R) -> Vec<f64> {
    let k = grads.n_tasks();
    (0..grads.cols())
        .map(|j| {
            let (mut total, mut abs, mut pos, mut neg) = (0.0, 0.0, 0.0, 0.0);
            for t in 0..k {
                let v = grads.row(t)[j];
                total += v;
                abs += v.abs();
                if v > 0.0 {
                    pos += v;
                } else {
                    neg += v;
                }
            }
            let u: f64 = rng.random();
            if abs <= EPS {
                return 0.0;
            }
            let purity = 0.5 * (1.0 + total / abs);
            if u < purity {
                pos
            } else {
                neg
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pcgrad_two_task_example() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, 0.0], vec![-1.0, 1.0]]);
        let out = pcgrad_detailed(&g, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((out.rows[0][0] - 0.5).abs() < 1e-15 && (out.rows[0][1] - 0.5).abs() < 1e-15);
        assert_eq!(out.rows[1], vec![0.0, 1.0]);
        assert!((out.direction[0] - 0.25).abs() < 1e-15 && (out.direction[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pcgrad_leaves_agreeing_rows_alone() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, 1.0], vec![2.0, 0.0]]);
        let out = pcgrad_detailed(&g, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(out.last_projection, vec![None, None]);
        assert_eq!(out.direction, vec![1.5, 0.5]);
    }

    #[test]
    fn graddrop_keeps_unanimous_coordinates() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, -2.0, 0.0], vec![3.0, -1.0, 0.0]]);
        for seed in 0..20 {
            let d = graddrop(&g, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(d, vec![4.0, -3.0, 0.0]);
        }
    }

    #[test]
    fn graddrop_keeps_one_sign_per_coordinate() {
        let g = GradientMatrix::from_rows(vec![vec![1.0, -1.0], vec![-2.0, 3.0]]);
        for seed in 0..20 {
            let d = graddrop(&g, &mut ChaCha8Rng::seed_from_u64(seed));
            assert!(d[0] == 1.0 || d[0] == -2.0);
            assert!(d[1] == -1.0 || d[1] == 3.0);
        }
    }
}
