//! Synthetic multi-task ranking data with known linear relevance.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{bin_label, quantile_edges, MultiTaskDataset, Query, RawDataset, RawItem, RawQuery, TaskId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_queries: usize,
    pub list_len: usize,
    pub d_f: usize,
    pub n_tasks: usize,
    /// Quantile grades per task.
    pub bins: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_queries: 500, list_len: 20, d_f: 10, n_tasks: 2, bins: 5, seed: 0 }
    }
}

/// Generated data together with the hidden scoring weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub dataset: MultiTaskDataset,
    /// One weight vector per task; task `k`'s relevance is `w_k · x`.
    pub weights: Vec<Vec<f64>>,
}

/// Standard-normal features; task `k`'s label is the quantile grade of
/// `w_k · x` for a random standard-normal `w_k` (edges over all items).
pub fn generate(spec: &SyntheticSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<Vec<f64>> =
        (0..spec.n_tasks).map(|_| (0..spec.d_f).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let n = spec.n_queries * spec.list_len;
    let features: Vec<f64> = (0..n * spec.d_f).map(|_| rng.sample(StandardNormal)).collect();
    let scores: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| features.chunks(spec.d_f).map(|x| crate::math::dot(w, x)).collect())
        .collect();
    let edges: Vec<Vec<f64>> = scores.iter().map(|s| quantile_edges(s, spec.bins)).collect();
    let k = spec.n_tasks;
    let queries = (0..spec.n_queries)
        .map(|q| {
            let rows = q * spec.list_len..(q + 1) * spec.list_len;
            let labels = rows.clone().flat_map(|i| (0..k).map(|t| bin_label(scores[t][i], &edges[t])).collect::<Vec<_>>()).collect();
            Query {
                qid: format!("{}", q + 1),
                n_items: spec.list_len,
                features: features[rows.start * spec.d_f..rows.end * spec.d_f].to_vec(),
                labels,
            }
        })
        .collect();
    let dataset = MultiTaskDataset {
        tasks: (0..k as u32).map(|t| if t == 0 { TaskId::GRADE } else { TaskId(spec.d_f as u32 + t) }).collect(),
        input_columns: (1..=spec.d_f as u32).collect(),
        queries,
        bin_edges: (0..k).map(|_| None).collect(),
        norm: None,
    };
    Synthetic { dataset, weights }
}

/// LETOR form of a synthetic dataset: task 0 is the grade and task `k ≥ 1`
/// is stored as feature `d_f + k`, so deriving with those auxiliary ids and
/// raw grading reproduces the labels.
pub fn to_raw(ds: &MultiTaskDataset) -> RawDataset {
    let (d, k) = (ds.d_in(), ds.n_tasks());
    let queries = ds
        .queries
        .iter()
        .map(|q| RawQuery {
            qid: q.qid.clone(),
            items: (0..q.n_items)
                .map(|i| {
                    let mut features: Vec<(u32, f64)> =
                        (0..d).map(|j| (j as u32 + 1, q.features[i * d + j])).collect();
                    for t in 1..k {
                        features.push(((d + t) as u32, q.labels[i * k + t]));
                    }
                    RawItem { grade: q.labels[i * k] as u32, features }
                })
                .collect(),
        })
        .collect();
    RawDataset { queries }
}

/// Splits queries into consecutive train/validation/test parts.
pub fn split(ds: &MultiTaskDataset, train: usize, vali: usize) -> [MultiTaskDataset; 3] {
    let part = |range: core::ops::Range<usize>| MultiTaskDataset {
        queries: ds.queries[range].to_vec(),
        ..ds.clone()
    };
    let n = ds.queries.len();
    let a = train.min(n);
    let b = (train + vali).min(n);
    [part(0..a), part(a..b), part(b..n)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{derive_tasks, Grading, TaskDerivationSpec};
    use alloc::vec;

    #[test]
    fn shapes_and_determinism() {
        let spec = SyntheticSpec { n_queries: 7, ..Default::default() };
        let a = generate(&spec);
        assert_eq!(a.dataset.queries.len(), 7);
        assert_eq!(a.dataset.queries[0].features.len(), 20 * 10);
        assert_eq!(a.dataset.queries[0].labels.len(), 20 * 2);
        assert_eq!(a, generate(&spec));
        assert!(a.dataset.validate().is_ok());
        assert_ne!(a.weights[0], a.weights[1]);
    }

    #[test]
    fn raw_round_trip_reproduces_labels() {
        let syn = generate(&SyntheticSpec { n_queries: 5, ..Default::default() });
        let raw = to_raw(&syn.dataset);
        let spec = TaskDerivationSpec { auxiliary: vec![11], grading: Grading::Raw, tasks: vec![], n_features: 11 };
        let ds = derive_tasks(&raw, &spec, None).unwrap();
        for (a, b) in ds.queries.iter().zip(&syn.dataset.queries) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.features, b.features);
        }
    }
}
