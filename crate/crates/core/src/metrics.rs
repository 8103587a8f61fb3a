//! NDCG, Pareto dominance, hypervolume and Δm%.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::math;

/// Indices of `scores` sorted by descending score, ties by ascending index.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// `Σ_{i≤k} (2^{y_i} − 1) / log2(i + 1)` over labels in ranked order.
pub fn dcg_at_k(labels: &[f64], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, y)| (math::powf(2.0, *y) - 1.0) / math::log2(i as f64 + 2.0))
        .sum()
}

/// NDCG@k of labels already arranged in score order. Lists whose ideal DCG
/// is zero score 1.
pub fn ndcg_at_k(labels: &[f64], k: usize) -> Result<f64, MetricError> {
    if k < 1 {
        return Err(MetricError::InvalidCutoff);
    }
    let mut ideal = labels.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg <= 0.0 {
        return Ok(1.0);
    }
    Ok(dcg_at_k(labels, k) / idcg)
}

/// NDCG@k of the ordering induced by `scores`.
pub fn ndcg_for_scores(scores: &[f64], labels: &[f64], k: usize) -> Result<f64, MetricError> {
    let ranked: Vec<f64> = score_order(scores).into_iter().map(|i| labels[i]).collect();
    ndcg_at_k(&ranked, k)
}

/// Per-task metric values with their orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub values: Vec<f64>,
    /// `true` where a higher value is better.
    pub higher_is_better: Vec<bool>,
}

impl MetricPoint {
    pub fn new(values: Vec<f64>, higher_is_better: Vec<bool>) -> Result<Self, MetricError> {
        if values.len() != higher_is_better.len() {
            return Err(MetricError::Inconsistent);
        }
        Ok(Self { values, higher_is_better })
    }

    /// All coordinates higher-is-better (NDCG).
    pub fn maximize(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { values, higher_is_better: vec![true; n] }
    }

    /// All coordinates lower-is-better (losses).
    pub fn minimize(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { values, higher_is_better: vec![false; n] }
    }

    /// Coordinates in minimization space: higher-is-better ones negated.
    pub fn minimization(&self) -> Vec<f64> {
        self.values.iter().zip(&self.higher_is_better).map(|(v, h)| if *h { -v } else { *v }).collect()
    }

    /// At least as good everywhere and strictly better somewhere.
    pub fn dominates(&self, other: &MetricPoint) -> bool {
        dominates_min(&self.minimization(), &other.minimization())
    }
}

fn dominates_min(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Points with their non-dominated flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSet {
    pub points: Vec<MetricPoint>,
    pub non_dominated: Vec<bool>,
}

impl FrontSet {
    pub fn front(&self) -> impl Iterator<Item = &MetricPoint> {
        self.points.iter().zip(&self.non_dominated).filter(|(_, f)| **f).map(|(p, _)| p)
    }
}

/// Flags every point that no other point dominates.
pub fn pareto_filter(points: &[MetricPoint]) -> Result<FrontSet, MetricError> {
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.higher_is_better != first.higher_is_better || p.values.len() != p.higher_is_better.len()) {
            return Err(MetricError::Inconsistent);
        }
    }
    let mins: Vec<Vec<f64>> = points.iter().map(MetricPoint::minimization).collect();
    let non_dominated = (0..mins.len())
        .map(|i| !(0..mins.len()).any(|j| j != i && dominates_min(&mins[j], &mins[i])))
        .collect();
    Ok(FrontSet { points: points.to_vec(), non_dominated })
}

/// Coordinate-wise maximum plus 0.1.
pub fn default_reference(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points.first().map_or(0, Vec::len);
    (0..k).map(|i| points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max) + 0.1).collect()
}

const INCLUSION_EXCLUSION_LIMIT: usize = 20;

/// Measure of the region dominated by `points` (minimization) and bounded
/// by `reference`. Points not strictly below the reference are dropped.
/// Two objectives use an exact sweep; three use inclusion-exclusion over the
/// non-dominated points (slicing beyond 20 points).
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64, MetricError> {
    let k = reference.len();
    if !(2..=3).contains(&k) {
        return Err(MetricError::UnsupportedDimension(k));
    }
    if points.iter().any(|p| p.len() != k) {
        return Err(MetricError::Inconsistent);
    }
    let inside: Vec<Vec<f64>> =
        points.iter().filter(|p| p.iter().zip(reference).all(|(a, r)| a < r)).cloned().collect();
    let front = non_dominated_unique(&inside);
    if front.is_empty() {
        return Ok(0.0);
    }
    Ok(if k == 2 {
        sweep_2d(&front, reference)
    } else if front.len() <= INCLUSION_EXCLUSION_LIMIT {
        inclusion_exclusion(&front, reference)
    } else {
        slice_3d(&front, reference)
    })
}

/// Hypervolume of metric points after mapping them to minimization space.
/// `reference` defaults to [`default_reference`] of the mapped points.
pub fn hypervolume_of(points: &[MetricPoint], reference: Option<&[f64]>) -> Result<f64, MetricError> {
    let mins: Vec<Vec<f64>> = points.iter().map(MetricPoint::minimization).collect();
    let reference = match reference {
        Some(r) => r.to_vec(),
        None => default_reference(&mins),
    };
    hypervolume(&mins, &reference)
}

fn non_dominated_unique(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().enumerate().any(|(j, q)| j != i && dominates_min(q, p));
        if !dominated && !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}

fn sweep_2d(front: &[Vec<f64>], reference: &[f64]) -> f64 {
    let mut pts: Vec<&Vec<f64>> = front.iter().collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut volume = 0.0;
    let mut ceiling = reference[1];
    for p in pts {
        if p[1] < ceiling {
            volume += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    volume
}

fn inclusion_exclusion(front: &[Vec<f64>], reference: &[f64]) -> f64 {
    let n = front.len();
    let k = reference.len();
    let mut total = 0.0;
    for mask in 1u32..(1u32 << n) {
        let mut corner = vec![f64::NEG_INFINITY; k];
        for (i, p) in front.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for d in 0..k {
                    corner[d] = corner[d].max(p[d]);
                }
            }
        }
        let volume: f64 = corner.iter().zip(reference).map(|(c, r)| r - c).product();
        if mask.count_ones() % 2 == 1 {
            total += volume;
        } else {
            total -= volume;
        }
    }
    total
}

fn slice_3d(front: &[Vec<f64>], reference: &[f64]) -> f64 {
    let mut pts: Vec<&Vec<f64>> = front.iter().collect();
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    for i in 0..pts.len() {
        let top = if i + 1 < pts.len() { pts[i + 1][2] } else { reference[2] };
        let depth = top - pts[i][2];
        if depth <= 0.0 {
            continue;
        }
        let slab: Vec<Vec<f64>> = pts[..=i].iter().map(|p| vec![p[0], p[1]]).collect();
        volume += depth * sweep_2d(&non_dominated_unique(&slab), &reference[..2]);
    }
    volume
}

/// Mean signed relative change versus a baseline, in percent; negative
/// means the model is better.
pub fn delta_m(model: &MetricPoint, baseline: &MetricPoint) -> Result<f64, MetricError> {
    if model.values.len() != baseline.values.len() || model.higher_is_better != baseline.higher_is_better {
        return Err(MetricError::Inconsistent);
    }
    if let Some(i) = baseline.values.iter().position(|b| *b == 0.0) {
        return Err(MetricError::ZeroBaseline(i));
    }
    let k = model.values.len() as f64;
    let sum: f64 = (0..model.values.len())
        .map(|i| {
            let sign = if model.higher_is_better[i] { -1.0 } else { 1.0 };
            sign * (model.values[i] - baseline.values[i]) / baseline.values[i]
        })
        .sum();
    Ok(sum / k * 100.0)
}
