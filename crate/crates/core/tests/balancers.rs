use mtlrank_core::balancers::*;
use mtlrank_core::{Balancer, BalancerKind, GradientMatrix, Preference};
use mtlrank_testkit::balancer_checks::{self, well_conditioned};
use mtlrank_testkit::oracles::{combine, grid_min_norm, grid_minimize};
use mtlrank_testkit::{dot, max_abs_diff, norm, random_gradients};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows(r: &[&[f64]]) -> GradientMatrix {
    GradientMatrix::from_rows(r.iter().map(|x| x.to_vec()).collect())
}

fn pref(r: &[f64]) -> Preference {
    Preference::new(r.to_vec()).unwrap()
}

fn random_losses(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.1..3.0)).collect()
}

fn random_pref(rng: &mut ChaCha8Rng, k: usize) -> Preference {
    pref(&(0..k).map(|_| rng.random_range(0.05..1.0)).collect::<Vec<_>>())
}

fn assert_simplex(w: &[f64], what: &str) {
    let s: f64 = w.iter().sum();
    assert!((s - 1.0).abs() <= 1e-9, "{what}: sum {s}");
    assert!(w.iter().all(|v| *v >= -1e-12), "{what}: {w:?}");
}

#[test]
fn min_norm_matches_the_grid() {
    let worst = balancer_checks::min_norm_vs_grid(200, 1);
    assert!(worst <= 1e-3, "{worst:e}");
}

#[test]
fn simplex_weighted_kinds_return_simplex_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kinds = [
        BalancerKind::Ls,
        BalancerKind::Rlw,
        BalancerKind::Mgda,
        BalancerKind::LogMgda,
        BalancerKind::CaGrad { c: 0.4 },
        BalancerKind::LogCaGrad { c: 0.4 },
        BalancerKind::Famo { lr: 0.025 },
        BalancerKind::SdmGrad { lambda: 0.3, inner_iters: 500 },
        BalancerKind::Epo,
    ];
    for kind in kinds {
        for _ in 0..100 {
            let k = rng.random_range(2..=4);
            let g = { let n = rng.random_range(1..=8); random_gradients(&mut rng, k, n, 1.0) };
            let losses = random_losses(&mut rng, k);
            let p = random_pref(&mut rng, k);
            let mut b = Balancer::new(kind.clone(), k).unwrap();
            let out = b.combine(&losses, &g, &p, &mut rng).unwrap();
            let w = out.weights.expect("weights");
            assert_simplex(&w, kind.name());
            if matches!(
                kind,
                BalancerKind::Ls | BalancerKind::Rlw | BalancerKind::Mgda | BalancerKind::Famo { .. } | BalancerKind::Epo
            ) {
                assert!(max_abs_diff(&out.direction, &combine(&g, &w)) <= 1e-12, "{}", kind.name());
            }
        }
    }
}

#[test]
fn identical_rows_give_a_parallel_direction_for_every_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in BalancerKind::all() {
        for k in [2, 3] {
            let g: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grads = GradientMatrix::from_rows(vec![g.clone(); k]);
            let losses = random_losses(&mut rng, k);
            let mut b = Balancer::new(kind.clone(), k).unwrap();
            let d = b.combine(&losses, &grads, &random_pref(&mut rng, k), &mut rng).unwrap().direction;
            let cos = dot(&d, &g) / (norm(&d) * norm(&g));
            assert!(cos >= 1.0 - 1e-6, "{} K={k}: cosine {cos}", kind.name());
        }
    }
}

#[test]
fn mgda_and_unregularized_sdmgrad_descend_every_task() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let k = rng.random_range(2..=3);
        let g = { let n = rng.random_range(k..=10); random_gradients(&mut rng, k, n, 1.0) };
        let dirs = [combine(&g, min_norm_weights(&g).as_slice()), sdmgrad(&g, 0.0, 500)];
        for (i, d) in dirs.iter().enumerate() {
            if norm(d) < 1e-6 {
                continue;
            }
            for row in g.rows() {
                assert!(dot(d, row) >= -1e-6, "dir {i}: {:e} norm {:e}", dot(d, row), norm(d));
            }
        }
    }
}

#[test]
fn cagrad_descends_whenever_its_dual_optimum_is_positive() {
    // min_k g_kᵀd equals min_w F(w), so descent exists only when that is positive
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..300 {
        let k = rng.random_range(2..=3);
        let g = { let n = rng.random_range(k..=10); random_gradients(&mut rng, k, n, 1.0) };
        let g0 = g.mean_row();
        let root_phi = 0.4 * norm(&g0);
        let (f_star, _) = grid_minimize(k, 200, |w| {
            let gw = combine(&g, w);
            dot(&gw, &g0) + root_phi * norm(&gw)
        });
        if f_star < 0.05 {
            continue;
        }
        checked += 1;
        let d = cagrad(&g, 0.4);
        for row in g.rows() {
            assert!(dot(&d, row) >= -1e-6);
        }
    }
    assert!(checked > 100);
}

#[test]
fn regularized_sdmgrad_is_as_good_as_its_objective_allows() {
    // with λ > 0 the exact minimizer itself may ascend a task; the solver's
    // worst projection must match the one at the grid minimizer
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lambda = 0.3;
    for _ in 0..200 {
        let k = rng.random_range(2..=3);
        let g = { let n = rng.random_range(k..=10); random_gradients(&mut rng, k, n, 1.0) };
        let g0 = g.mean_row();
        let shifted = |w: &[f64]| {
            let mut v = combine(&g, w);
            v.iter_mut().zip(&g0).for_each(|(a, b)| *a += lambda * b);
            v
        };
        let (_, w) = grid_minimize(k, 300, |w| norm(&shifted(w)));
        let oracle: f64 = g.rows().map(|r| dot(r, &shifted(&w)) / (1.0 + lambda)).fold(f64::INFINITY, f64::min);
        let d = sdmgrad(&g, lambda, 500);
        let ours: f64 = g.rows().map(|r| dot(r, &d)).fold(f64::INFINITY, f64::min);
        if oracle >= 0.0 {
            assert!(ours >= -1e-6, "{ours:e} vs {oracle:e}");
        } else {
            assert!((ours - oracle).abs() <= 1e-2, "{ours:e} vs {oracle:e}");
        }
    }
}

#[test]
fn imtl_descends_for_two_tasks_and_for_conic_combinations() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let k = rng.random_range(2..=3);
        let g = { let n = rng.random_range(k..=10); random_gradients(&mut rng, k, n, 1.0) };
        let out = imtl_g(&g).unwrap();
        if k == 3 && out.alpha.iter().any(|a| *a < 0.0) {
            continue;
        }
        for row in g.rows() {
            assert!(dot(&out.direction, row) >= -1e-6, "{:?}", out.alpha);
        }
    }
}

#[test]
fn balancer_postconditions_hold_on_random_instances() {
    assert!(balancer_checks::pcgrad_last_projection(200, 7) >= -1e-9);
    assert_eq!(balancer_checks::cagrad_zero_c(200, 8), 0.0);
    assert!(balancer_checks::sdmgrad_zero_lambda(200, 9, 500) <= 1e-4);
    assert!(balancer_checks::imtl_equal_projection(200, 10) <= 1e-8);
    assert!(balancer_checks::nash_residual(200, 11, 100) <= 1e-3);
    assert_eq!(balancer_checks::graddrop_unanimous(200, 12), 0.0);
}

#[test]
fn every_kind_is_deterministic_given_the_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let g = random_gradients(&mut rng, 3, 7, 1.0);
    let steps: Vec<Vec<f64>> = (0..4).map(|_| random_losses(&mut rng, 3)).collect();
    let p = random_pref(&mut rng, 3);
    for kind in BalancerKind::all() {
        let run = || {
            let mut b = Balancer::new(kind.clone(), 3).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(99);
            let outs: Vec<Combination> = steps.iter().map(|l| b.combine(l, &g, &p, &mut r).unwrap()).collect();
            (outs, b.state().clone())
        };
        assert_eq!(run(), run(), "{}", kind.name());
    }
}

#[test]
fn kind_names_round_trip() {
    let all = BalancerKind::all();
    assert_eq!(all.len(), 21);
    for kind in all {
        assert_eq!(BalancerKind::from_name(kind.name()), Some(kind.clone()));
    }
}

proptest! {
    #[test]
    fn chebyshev_argmax_ignores_ray_scale(
        losses in prop::collection::vec(0.01..5.0f64, 2..5),
        ray in prop::collection::vec(0.05..1.0f64, 4),
        c in 0.01..100.0f64,
    ) {
        let k = losses.len();
        let r = &ray[..k];
        let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
        let (_, a) = chebyshev(&losses, &pref(r), 0.0);
        let (_, b) = chebyshev(&losses, &pref(&scaled), 0.0);
        let arg = |w: &[f64]| w.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        prop_assert_eq!(arg(&a), arg(&b));
    }

    #[test]
    fn soft_chebyshev_is_within_the_logsumexp_bound(
        losses in prop::collection::vec(0.01..5.0f64, 2..5),
        ray in prop::collection::vec(0.05..1.0f64, 4),
    ) {
        let k = losses.len();
        let p = pref(&ray[..k]);
        let (hard, _) = chebyshev(&losses, &p, 0.0);
        let (soft, _) = chebyshev(&losses, &p, 100.0);
        prop_assert!(soft >= hard - 1e-12);
        prop_assert!(soft - hard <= (k as f64).ln() / 100.0 + 1e-12);
        if k == 2 {
            prop_assert!(soft - hard <= 0.01);
        }
    }

    #[test]
    fn ec_multipliers_stay_nonnegative(seq in prop::collection::vec(prop::collection::vec(0.0..3.0f64, 3), 1..20)) {
        let g = rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let mut lambda = vec![0.0; 3];
        for losses in seq {
            ec_direction(&g, &losses, 0, &[1.0, 1.0, 1.0], 1.0, &mut lambda).unwrap();
            prop_assert!(lambda.iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn linear_scalarization_example() {
    let g = rows(&[&[1.0, 2.0], &[3.0, -1.0]]);
    let mut b = Balancer::new(BalancerKind::Ls, 2).unwrap();
    let out = b.combine(&[1.0, 1.0], &g, &pref(&[0.5, 0.5]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.direction, vec![2.0, 0.5]);
}

#[test]
fn min_norm_examples() {
    let w = min_norm_weights(&rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
    assert!(max_abs_diff(w.as_slice(), &[0.5, 0.5]) < 1e-9);
    let w = min_norm_weights(&rows(&[&[1.0, 0.0], &[2.0, 0.0]]));
    assert!(max_abs_diff(w.as_slice(), &[1.0, 0.0]) < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let g2 = random_gradients(&mut rng, 2, 5, 1.0);
        let g3 = GradientMatrix::from_rows(vec![g2.row(0).to_vec(), g2.row(1).to_vec(), g2.row(0).to_vec()]);
        let a = norm(&combine(&g2, min_norm_weights(&g2).as_slice()));
        let b = norm(&combine(&g3, min_norm_weights(&g3).as_slice()));
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn pcgrad_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = pcgrad(&rows(&[&[1.0, 0.0], &[-1.0, 1.0]]), &mut rng);
    assert!(max_abs_diff(&d, &[0.25, 0.75]) < 1e-15);
    let agreeing = rows(&[&[1.0, 2.0], &[0.5, 0.1], &[2.0, 0.0]]);
    assert!(max_abs_diff(&pcgrad(&agreeing, &mut rng), &agreeing.mean_row()) < 1e-15);
}

#[test]
fn cagrad_examples() {
    let g = vec![0.3, -1.2, 0.7];
    let d = cagrad(&GradientMatrix::from_rows(vec![g.clone(), g.clone()]), 0.4);
    let expect: Vec<f64> = g.iter().map(|v| 1.4 * v).collect();
    assert!(max_abs_diff(&d, &expect) < 1e-9);

    let unit = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let g0 = unit.mean_row();
    let root_phi = 0.5 * norm(&g0);
    let f = |w: &[f64]| {
        let gw = combine(&unit, w);
        dot(&gw, &g0) + root_phi * norm(&gw)
    };
    let (_, w) = cagrad_weights(&unit, 0.5);
    let (best, _) = grid_minimize(2, 1000, f);
    assert!((f(w.as_slice()) - best).abs() <= 1e-3);
}

#[test]
fn imtl_example() {
    let out = imtl_g(&rows(&[&[2.0, 0.0], &[0.0, 1.0]])).unwrap();
    assert!(max_abs_diff(&out.alpha, &[1.0 / 3.0, 2.0 / 3.0]) < 1e-12);
    assert!(max_abs_diff(&out.direction, &[2.0 / 3.0, 2.0 / 3.0]) < 1e-12);
}

#[test]
fn nash_examples() {
    let out = nash_weights(&rows(&[&[1.0, 0.0], &[0.0, 1.0]]), 100, None).unwrap();
    assert!(max_abs_diff(&out.weights, &[1.0, 1.0]) < 1e-6);
    assert!(max_abs_diff(&out.direction, &[1.0, 1.0]) < 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let g = well_conditioned(&mut rng, 3, 5);
        let c = [0.5, 3.0, 1.0];
        let scaled = g.scale_rows(&c);
        let a = nash_weights(&g, 100, None).unwrap();
        let b = nash_weights(&scaled, 100, None).unwrap();
        for i in 0..3 {
            assert!((b.weights[i] * c[i] - a.weights[i]).abs() <= 1e-6 * a.weights[i].max(1.0));
        }
        assert!(b.residual <= 1e-3);
    }

    let same = rows(&[&[1.0, -2.0], &[1.0, -2.0]]);
    let out = nash_weights(&same, 100, None).unwrap();
    assert!(out.weights.iter().all(|w| w.is_finite()));
    assert!(out.residual <= 1e-2);
}

#[test]
fn famo_weights_follow_the_slowest_task() {
    let mut state = FamoState::new(2);
    assert_eq!(state.weights().as_slice(), &[0.5, 0.5]);
    let mut losses = vec![1.0, 1.0];
    let mut prev_w1 = state.weights().as_slice()[0];
    famo_step(&mut state, &losses, 0.025).unwrap();
    for _ in 0..10 {
        losses[1] *= 0.8;
        let w = famo_step(&mut state, &losses, 0.025).unwrap();
        assert!(w.as_slice()[0] > prev_w1);
        prev_w1 = w.as_slice()[0];
    }
}

#[test]
fn sdmgrad_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let g = random_gradients(&mut rng, 3, 6, 1.0);
        let g0 = g.mean_row();
        let d = sdmgrad(&g, 1e6, 500);
        let diff: Vec<f64> = d.iter().zip(&g0).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-3 * norm(&g0));
    }

    let unit = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let g0 = unit.mean_row();
    let objective = |w: &[f64]| {
        let mut v = combine(&unit, w);
        v.iter_mut().zip(&g0).for_each(|(a, b)| *a += b);
        dot(&v, &v)
    };
    let (_, w) = sdmgrad_weights(&unit, 1.0, 500, None);
    let (best, _) = grid_minimize(2, 1000, objective);
    assert!((objective(w.as_slice()) - best).abs() <= 1e-4);
}

#[test]
fn graddrop_examples() {
    let g = rows(&[&[1.0], &[-1.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let n = 10_000;
    let mean: f64 = (0..n).map(|_| graddrop(&g, &mut rng)[0]).sum::<f64>() / n as f64;
    assert!(mean.abs() <= 0.05, "{mean}");

    for _ in 0..100 {
        let g = random_gradients(&mut rng, 3, 6, 1.0);
        let d = graddrop(&g, &mut rng);
        for (j, dj) in d.iter().enumerate() {
            let col: Vec<f64> = g.rows().map(|r| r[j]).collect();
            let pos: f64 = col.iter().filter(|v| **v > 0.0).sum();
            let neg: f64 = col.iter().filter(|v| **v < 0.0).sum();
            assert!(*dj == pos || *dj == neg);
        }
    }
}

#[test]
fn scalarization_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let p = pref(&[0.3, 0.7]);

    let mut dwa = Balancer::new(BalancerKind::Dwa { temperature: 2.0 }, 2).unwrap();
    for _ in 0..4 {
        let s = dwa.scalarize(&[0.8, 1.5], &p, &mut rng).unwrap().unwrap();
        assert!(max_abs_diff(&s.loss_weights, &[1.0, 1.0]) < 1e-12);
    }

    let mut unc = Balancer::new(BalancerKind::Uncertainty, 2).unwrap();
    let s = unc.scalarize(&[0.8, 1.5], &p, &mut rng).unwrap().unwrap();
    assert!((s.value - 0.5 * 2.3).abs() < 1e-15);

    // d(Σ r log L)/dθ is unchanged when a loss and its gradient are scaled together
    let g = rows(&[&[1.0, 0.5], &[-0.2, 1.0]]);
    let mut sils = Balancer::new(BalancerKind::Sils, 2).unwrap();
    let a = sils.combine(&[0.8, 1.5], &g, &p, &mut rng).unwrap().direction;
    let scaled = g.scale_rows(&[4.0, 1.0]);
    let b = sils.combine(&[3.2, 1.5], &scaled, &p, &mut rng).unwrap().direction;
    assert!(max_abs_diff(&a, &b) < 1e-12);

    let (value, active) = chebyshev(&[2.0, 4.0], &pref(&[0.5, 0.5]), 0.0);
    assert_eq!(value, 2.0);
    assert_eq!(active, vec![0.0, 1.0]);
}

#[test]
fn epo_examples() {
    let unit = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let r = pref(&[0.25, 0.75]);
    let on_ray = epo_direction(&unit, &[3.0, 1.0], &r).unwrap();
    assert_eq!(on_ray.mode, EpoMode::Descent);
    assert!(max_abs_diff(&on_ray.direction, &combine(&unit, min_norm_weights(&unit).as_slice())) < 1e-12);

    let half = pref(&[0.5, 0.5]);
    let off = epo_direction(&unit, &[4.0, 1.0], &half).unwrap();
    assert_eq!(off.mode, EpoMode::Balance);
    assert!(max_abs_diff(&off.weights, &[1.0, 0.0]) < 1e-9);
    // a small step along −d reduces the non-uniformity
    let nu = |l: &[f64]| {
        let s: f64 = l.iter().sum();
        l.iter().map(|v| (v / s) * (2.0 * v / s).ln()).sum::<f64>()
    };
    let stepped: Vec<f64> = [4.0, 1.0].iter().zip(unit.rows()).map(|(l, g)| l - 0.01 * dot(g, &off.direction)).collect();
    assert!(nu(&stepped) < nu(&[4.0, 1.0]));

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..100 {
        let k = rng.random_range(2..=4);
        let g = random_gradients(&mut rng, k, 6, 1.0);
        let out = epo_direction(&g, &random_losses(&mut rng, k), &random_pref(&mut rng, k)).unwrap();
        assert_simplex(&out.weights, "epo");
        assert!(max_abs_diff(&out.direction, &combine(&g, &out.weights)) <= 1e-12);
    }
}

#[test]
fn wc_mgda_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = random_gradients(&mut rng, 2, 4, 1.0);
    let out = wc_mgda_direction(&g, &[50.0, 0.01], &pref(&[0.5, 0.5]));
    let cos = dot(&out.direction, g.row(0)) / (norm(&out.direction) * norm(g.row(0)));
    assert!(cos >= 1.0 - 1e-6);

    let unit = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let r = [0.25, 0.75];
    let out = wc_mgda_direction(&unit, &[3.0, 1.0], &pref(&r));
    let reweighted = unit.scale_rows(&r);
    let best = grid_min_norm(&reweighted, 1000);
    assert!((norm(&out.direction) - best).abs() <= 1e-3);

    for _ in 0..100 {
        let k = rng.random_range(2..=4);
        let g = random_gradients(&mut rng, k, 6, 1.0);
        let losses = random_losses(&mut rng, k);
        let p = random_pref(&mut rng, k);
        let out = wc_mgda_direction(&g, &losses, &p);
        let worst = (0..k).max_by(|&a, &b| (p.ray()[a] * losses[a]).total_cmp(&(p.ray()[b] * losses[b]))).unwrap();
        assert!(dot(&out.direction, g.row(worst)) * p.ray()[worst] >= -1e-6);
    }
}

#[test]
fn ec_examples() {
    let g = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let mut lambda = vec![0.0; 2];
    let d = ec_direction(&g, &[1.0, 0.2], 0, &[1.0, 0.5], 1.0, &mut lambda).unwrap();
    assert_eq!(d, vec![1.0, 0.0]);
    ec_direction(&g, &[1.0, 0.7], 0, &[1.0, 0.5], 1.0, &mut lambda).unwrap();
    let before = lambda[1];
    ec_direction(&g, &[1.0, 0.7], 0, &[1.0, 0.5], 1.0, &mut lambda).unwrap();
    assert!(lambda[1] > before && before > 0.0);
}

#[test]
fn log_transform_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let g = random_gradients(&mut rng, 2, 5, 1.0);
    assert_eq!(log_transform(&g, &[1.0, 1.0]).unwrap(), g);
    let scaled = g.scale_rows(&[1.0, 7.0]);
    let a = log_transform(&g, &[0.5, 2.0]).unwrap();
    let b = log_transform(&scaled, &[0.5, 14.0]).unwrap();
    assert!(max_abs_diff(a.row(1), b.row(1)) < 1e-12);

    // LOG_MGDA equalizes first-order relative decreases g_kᵀd / L_k where
    // MGDA equalizes absolute ones
    let unit = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let losses = [10.0, 0.1];
    let mut b = Balancer::new(BalancerKind::LogMgda, 2).unwrap();
    let d = b.combine(&losses, &unit, &pref(&[0.5, 0.5]), &mut rng).unwrap().direction;
    let rel: Vec<f64> = unit.rows().zip(&losses).map(|(g, l)| dot(g, &d) / l).collect();
    assert!((rel[0] - rel[1]).abs() <= 1e-6 * rel[0], "{rel:?}");
    let mgda = combine(&unit, min_norm_weights(&unit).as_slice());
    assert!((dot(unit.row(0), &mgda) - dot(unit.row(1), &mgda)).abs() < 1e-9);
}
