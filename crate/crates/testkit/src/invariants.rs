//! Randomized model invariants in eval mode.

use mtlrank_core::model::{self, ListView};
use mtlrank_core::{Mode, PaddedBatch, RankerConfig, RankerParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst deviations found over `lists` random lists.
#[derive(Clone, Copy, Debug, Default)]
pub struct InvariantReport {
    pub permutation: f64,
    pub padding: f64,
}

pub fn small_config(d_f: usize, max_len: usize) -> RankerConfig {
    RankerConfig { d_f, d_fc: 8, n_blocks: 2, n_heads: 2, d_h: 16, max_list_len: max_len, ..Default::default() }
}

fn scores(params: &RankerParams, features: &[f64], n: usize, list_len: usize, d_f: usize) -> Vec<f64> {
    let labels = vec![0.0; n];
    let batch =
        PaddedBatch::from_lists(&[ListView { features, labels: &labels }], d_f, 1, list_len).expect("batch");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model::score(params, &batch, Mode::Eval, &mut rng).expect("score").into_data()
}

/// For each random list: scores of a permuted list against the permuted
/// scores, and scores with extra padded slots against the unpadded ones.
pub fn check_model_invariants(lists: usize, seed: u64) -> InvariantReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvariantReport::default();
    for i in 0..lists {
        let d_f = rng.random_range(1..=5);
        let n = rng.random_range(1..=12);
        let pad = rng.random_range(1..=6);
        let mut cfg = small_config(d_f, n + pad);
        cfg.n_blocks = rng.random_range(0..=2);
        let params = RankerParams::init(&cfg, seed.wrapping_add(i as u64)).expect("init");
        let features: Vec<f64> = (0..n * d_f).map(|_| rng.random_range(-2.0..2.0)).collect();
        let base = scores(&params, &features, n, n, d_f);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<f64> = perm.iter().flat_map(|&j| features[j * d_f..(j + 1) * d_f].to_vec()).collect();
        let moved = scores(&params, &permuted, n, n, d_f);
        for (p, &j) in perm.iter().enumerate() {
            report.permutation = report.permutation.max((moved[p] - base[j]).abs());
        }

        let padded = scores(&params, &features, n, n + pad, d_f);
        for j in 0..n {
            report.padding = report.padding.max((padded[j] - base[j]).abs());
        }
    }
    report
}
