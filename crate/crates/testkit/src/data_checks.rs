//! WEB30K-format sample data and the leakage audit.

use std::fmt::Write;

use mtlrank_core::data::{derive_tasks, parse_letor, Batcher, RawDataset};
use mtlrank_core::{MultiTaskDataset, TaskDerivationSpec, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `lines` LETOR lines over 136 features spread across queries of 1–12
/// items. Values mix integer counts, decimals and omitted (zero) features,
/// as in the real files.
pub fn web30k_sample(lines: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut qid = 10;
    let mut left = 0;
    for _ in 0..lines {
        if left == 0 {
            qid += rng.random_range(1..40);
            left = rng.random_range(1..=12);
        }
        left -= 1;
        let _ = write!(out, "{} qid:{qid}", rng.random_range(0..=4));
        for f in 1..=136u32 {
            match rng.random_range(0..10) {
                0 => continue,
                1..=4 => {
                    let _ = write!(out, " {f}:{}", rng.random_range(0..500));
                }
                _ => {
                    let v: f64 = rng.random_range(-3.0..40.0);
                    let _ = write!(out, " {f}:{:.6}", v);
                }
            }
        }
        if rng.random_bool(0.1) {
            out.push_str(" # docid = x");
        }
        out.push('\n');
    }
    out
}

/// Outcome of the leakage audit for one task derivation spec.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageReport {
    pub d_in: usize,
    pub n_tasks: usize,
    pub pairs: Vec<[TaskId; 2]>,
    /// Every pair is distinct, unordered and selectable from the dataset.
    pub pairs_valid: bool,
    /// No auxiliary id is among the input columns.
    pub columns_clean: bool,
    /// Every batch has `d_in` columns and its features stay bitwise
    /// identical when all auxiliary values are replaced.
    pub batches_blind: bool,
    /// The replacement did change the derived labels.
    pub labels_changed: bool,
}

impl LeakageReport {
    pub fn passed(&self, d_in: usize, n_tasks: usize, n_pairs: usize) -> bool {
        self.d_in == d_in
            && self.n_tasks == n_tasks
            && self.pairs.len() == n_pairs
            && self.pairs_valid
            && self.columns_clean
            && self.batches_blind
            && self.labels_changed
    }
}

fn batches(ds: &MultiTaskDataset, n: usize) -> Vec<Vec<f64>> {
    let mut b = Batcher::new(ds, 4, 128, 3).expect("batcher");
    (0..n)
        .map(|_| {
            let batch = b.next_batch().expect("batch");
            assert_eq!(batch.d_f, ds.d_in());
            batch.features
        })
        .collect()
}

/// Derives tasks from `raw` and from a copy whose auxiliary feature values
/// are all overwritten, and compares what reaches the model.
pub fn leakage_audit(raw: &RawDataset, spec: &TaskDerivationSpec) -> LeakageReport {
    let ds = derive_tasks(raw, spec, None).expect("derive");
    let mut poisoned = raw.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for item in poisoned.queries.iter_mut().flat_map(|q| q.items.iter_mut()) {
        for a in &spec.auxiliary {
            let v = 1e6 + rng.random_range(0.0..1e3);
            match item.features.binary_search_by_key(a, |(f, _)| *f) {
                Ok(i) => item.features[i].1 = v,
                Err(i) => item.features.insert(i, (*a, v)),
            }
        }
    }
    let poisoned_ds = derive_tasks(&poisoned, spec, None).expect("derive");
    let pairs = spec.pairs();
    let mut seen = std::collections::BTreeSet::new();
    let pairs_valid = pairs.iter().all(|p| {
        p[0] != p[1]
            && seen.insert((p[0].min(p[1]), p[0].max(p[1])))
            && ds.select_tasks(p).map(|s| s.n_tasks() == 2).unwrap_or(false)
    });
    let columns_clean = ds.input_columns.iter().all(|c| !spec.auxiliary.contains(c))
        && ds.input_columns.len() == spec.n_features as usize - spec.auxiliary.len();
    let n = ds.queries.len().div_ceil(4) + 1;
    let batches_blind = batches(&ds, n) == batches(&poisoned_ds, n);
    let labels_changed = ds.queries.iter().zip(&poisoned_ds.queries).any(|(a, b)| a.labels != b.labels)
        || spec.auxiliary.is_empty();
    LeakageReport { d_in: ds.d_in(), n_tasks: ds.n_tasks(), pairs, pairs_valid, columns_clean, batches_blind, labels_changed }
}

/// Audit of the default spec on a 100-line sample.
pub fn default_leakage_audit() -> LeakageReport {
    let raw = parse_letor(&web30k_sample(100, 1)).expect("sample parses");
    leakage_audit(&raw, &TaskDerivationSpec::default())
}
