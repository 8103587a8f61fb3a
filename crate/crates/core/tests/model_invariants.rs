use mtlrank_core::model::{self, ListView};
use mtlrank_core::{Mode, PaddedBatch, RankerParams};
use mtlrank_testkit::invariants::{check_model_invariants, small_config};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn permutation_equivariance_and_padding_invariance() {
    let r = check_model_invariants(100, 7);
    assert!(r.permutation <= 1e-9, "permutation {:e}", r.permutation);
    assert!(r.padding <= 1e-6, "padding {:e}", r.padding);
}

#[test]
fn eval_scores_repeat_and_train_scores_vary() {
    let cfg = small_config(3, 6);
    let params = RankerParams::init(&cfg, 1).unwrap();
    let features: Vec<f64> = (0..18).map(|i| (i as f64 * 0.37).sin()).collect();
    let labels = [0.0; 6];
    let batch = PaddedBatch::from_lists(&[ListView { features: &features, labels: &labels }], 3, 1, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = model::score(&params, &batch, Mode::Eval, &mut rng).unwrap();
    let b = model::score(&params, &batch, Mode::Eval, &mut rng).unwrap();
    assert_eq!(a, b);
    let c = model::score(&params, &batch, Mode::Train, &mut rng).unwrap();
    assert_ne!(a, c);
}
