use mtlrank_core::model::{self, ListView};
use mtlrank_core::{finite_diff_check, LossSpec, Mode, PaddedBatch, RankerConfig, RankerParams};
use mtlrank_testkit::gradcheck::{self, H, OPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;
const INSTANCES: u64 = 50;

#[test]
fn every_op_matches_central_differences() {
    for op in OPS {
        for seed in 0..INSTANCES {
            let err = gradcheck::op_error(op, seed).unwrap_or_else(|e| panic!("{op} seed {seed}: {e}"));
            assert!(err <= TOL, "{op} seed {seed}: rel err {err:e}");
        }
    }
}

#[test]
fn every_loss_matches_central_differences() {
    for spec in LossSpec::all_defaults() {
        for seed in 0..INSTANCES {
            let err = gradcheck::loss_error(&spec, 1000 + seed)
                .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", spec.name()));
            assert!(err <= TOL, "{} seed {seed}: rel err {err:e}", spec.name());
        }
    }
}

#[test]
fn loss_parameters_other_than_defaults() {
    let specs = [
        LossSpec::RankNet { sigma: 2.5 },
        LossSpec::LambdaRank { sigma: 0.5, cutoff: 3 },
        LossSpec::RankHinge { margin: 0.3 },
        LossSpec::ApproxNdcg { temperature: 0.3 },
        LossSpec::OrdinalBce { max_label: 6.0 },
    ];
    for spec in specs {
        for seed in 0..10 {
            let err = gradcheck::loss_error(&spec, 5000 + seed).unwrap();
            assert!(err <= TOL, "{spec:?} seed {seed}: {err:e}");
        }
    }
}

fn random_batch(rng: &mut ChaCha8Rng, d_f: usize, k: usize, list_len: usize) -> PaddedBatch {
    let lens: Vec<usize> = (0..2).map(|_| rng.random_range(2..=list_len)).collect();
    let feats: Vec<Vec<f64>> =
        lens.iter().map(|n| (0..n * d_f).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<Vec<f64>> =
        lens.iter().map(|n| (0..n * k).map(|_| rng.random_range(0..=4) as f64).collect()).collect();
    let views: Vec<ListView> =
        feats.iter().zip(&labels).map(|(f, l)| ListView { features: f, labels: l }).collect();
    PaddedBatch::from_lists(&views, d_f, k, list_len).unwrap()
}

#[test]
fn per_task_gradient_rows_match_central_differences() {
    let cfg = RankerConfig { d_f: 3, d_fc: 4, n_blocks: 1, n_heads: 2, d_h: 6, max_list_len: 5, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = random_batch(&mut rng, 3, 2, 5);
    let specs = [LossSpec::ListNet, LossSpec::RankNet { sigma: 1.0 }];
    let params = RankerParams::init(&cfg, 3).unwrap();
    assert!(params.n_params() <= 2000);
    let (g, values) = model::per_task_gradients(&params, &batch, &specs, Mode::Eval, &mut rng).unwrap();
    let theta = params.to_flat();
    for k in 0..2 {
        let row = g.row(k).to_vec();
        let err = finite_diff_check(
            |p| {
                let mut q = params.clone();
                q.set_flat(p).unwrap();
                let (_, v) = model::per_task_gradients(&q, &batch, &specs, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
                    .unwrap();
                Ok((v[k], row.clone()))
            },
            &theta,
            H,
        )
        .unwrap();
        assert!(err <= TOL, "task {k}: {err:e} (loss {})", values[k]);
    }
}
