use mtlrank_core::metrics::{delta_m, hypervolume, hypervolume_of, ndcg_at_k, ndcg_for_scores, pareto_filter, score_order};
use mtlrank_core::{MetricError, MetricPoint};
use mtlrank_testkit::metric_checks::{hv_vs_monte_carlo, ndcg_all_orderings, ndcg_label_sets, pareto_disagreements};
use proptest::prelude::*;

#[test]
fn ndcg_matches_exhaustive_oracle_on_every_ordering() {
    let mut worst: f64 = 0.0;
    for labels in ndcg_label_sets(6, 4, 11) {
        worst = worst.max(ndcg_all_orderings(&labels));
    }
    assert!(worst <= 1e-12, "worst gap {worst:e}");
}

#[test]
fn ndcg_examples() {
    assert_eq!(ndcg_at_k(&[4.0, 2.0, 2.0, 0.0], 10).unwrap(), 1.0);
    // DCG 7 + 1/log2(3) + 3/2 against ideal 7 + 3/log2(3) + 1/2
    let dcg = 7.0 + 1.0 / 3f64.log2() + 1.5;
    let ideal = 7.0 + 3.0 / 3f64.log2() + 0.5;
    assert!((ndcg_at_k(&[3.0, 1.0, 2.0], 3).unwrap() - dcg / ideal).abs() < 1e-15);
    assert!((dcg / ideal - 0.9721).abs() < 5e-5);
    assert_eq!(ndcg_at_k(&[0.0; 4], 2).unwrap(), 1.0);
    assert_eq!(ndcg_at_k(&[1.0], 0), Err(MetricError::InvalidCutoff));
}

#[test]
fn score_ties_break_by_index() {
    assert_eq!(score_order(&[1.0, 2.0, 1.0, 2.0]), vec![1, 3, 0, 2]);
    let labels = [0.0, 1.0, 2.0];
    // all tied: ranked in index order
    let tied = ndcg_for_scores(&[0.5; 3], &labels, 3).unwrap();
    assert_eq!(tied, ndcg_at_k(&labels, 3).unwrap());
}

proptest! {
    #[test]
    fn ndcg_ignores_monotone_score_transforms(
        scores in prop::collection::vec(-5.0f64..5.0, 1..12),
        seed in 0u64..1000,
    ) {
        let labels: Vec<f64> = (0..scores.len()).map(|i| ((i as u64 * 7 + seed) % 5) as f64).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp() * 2.0 + 1.0).collect();
        prop_assert_eq!(score_order(&scores), score_order(&transformed));
        prop_assert_eq!(
            ndcg_for_scores(&scores, &labels, 5).unwrap(),
            ndcg_for_scores(&transformed, &labels, 5).unwrap()
        );
    }
}

#[test]
fn hypervolume_worked_example() {
    let pts = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]];
    assert_eq!(hypervolume(&pts, &[4.0, 4.0]).unwrap(), 6.0);
}

#[test]
fn hypervolume_agrees_with_monte_carlo() {
    let worst = hv_vs_monte_carlo(50, 1_000_000, 3);
    assert!(worst <= 0.01, "worst relative gap {worst}");
}

#[test]
fn hypervolume_small_cases() {
    assert!((hypervolume(&[vec![0.5, 1.0]], &[2.0, 3.0]).unwrap() - 3.0).abs() < 1e-15);
    assert!((hypervolume(&[vec![0.0, 0.0, 0.0]], &[1.0, 2.0, 3.0]).unwrap() - 6.0).abs() < 1e-15);
    assert_eq!(hypervolume(&[vec![5.0, 0.0]], &[4.0, 4.0]).unwrap(), 0.0);
    assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
    assert_eq!(hypervolume(&[vec![0.0; 4]], &[1.0; 4]), Err(MetricError::UnsupportedDimension(4)));
    // two overlapping 3-D boxes: 2·1·2 + 1·2·1 − 1·1·1
    let pts = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]];
    assert!((hypervolume(&pts, &[2.0, 2.0, 2.0]).unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn three_d_slicing_matches_inclusion_exclusion() {
    // 25 points on a sphere patch: above the inclusion-exclusion limit.
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let (a, b) = (0.1 + 0.3 * i as f64, 0.1 + 0.3 * j as f64);
            pts.push(vec![a.cos() * b.cos(), a.sin() * b.cos(), b.sin()]);
        }
    }
    let full = hypervolume(&pts, &[1.2, 1.2, 1.2]).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
    let mc = mtlrank_testkit::oracles::mc_hypervolume(&pts, &[1.2, 1.2, 1.2], 400_000, &mut rng);
    assert!((full - mc).abs() / full < 0.01, "{full} vs {mc}");
}

#[test]
fn hypervolume_of_negates_maximized_metrics() {
    let pts = vec![MetricPoint::maximize(vec![0.8, 0.2]), MetricPoint::maximize(vec![0.2, 0.8])];
    let direct = hypervolume(&[vec![-0.8, -0.2], vec![-0.2, -0.8]], &[0.0, 0.0]).unwrap();
    assert_eq!(hypervolume_of(&pts, Some(&[0.0, 0.0])).unwrap(), direct);
    // default reference: worst coordinate + 0.1 → (-0.1, -0.1)
    let expected = hypervolume(&[vec![-0.8, -0.2], vec![-0.2, -0.8]], &[-0.1, -0.1]).unwrap();
    assert_eq!(hypervolume_of(&pts, None).unwrap(), expected);
}

proptest! {
    #[test]
    fn hypervolume_is_monotone_and_translation_invariant(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..8),
        extra in (0.0f64..1.2, 0.0f64..1.2, 0.0f64..1.2),
        shift in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        three in any::<bool>(),
    ) {
        let k = if three { 3 } else { 2 };
        let take = |p: (f64, f64, f64)| [p.0, p.1, p.2][..k].to_vec();
        let points: Vec<Vec<f64>> = pts.iter().copied().map(take).collect();
        let reference = vec![1.1; k];
        let base = hypervolume(&points, &reference).unwrap();
        let mut more = points.clone();
        more.push(take(extra));
        prop_assert!(hypervolume(&more, &reference).unwrap() >= base - 1e-12);
        let s = take(shift);
        let moved: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&s).map(|(a, b)| a + b).collect()).collect();
        let moved_ref: Vec<f64> = reference.iter().zip(&s).map(|(a, b)| a + b).collect();
        let after = hypervolume(&moved, &moved_ref).unwrap();
        prop_assert!((after - base).abs() <= 1e-9 * (1.0 + base), "{} vs {}", after, base);
    }

    #[test]
    fn dominated_points_do_not_change_hypervolume(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..10),
        pick in 0usize..10,
        bump in (0.0f64..0.5, 0.0f64..0.5),
    ) {
        let points: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
        let p = &points[pick % points.len()];
        let mut more = points.clone();
        more.push(vec![p[0] + bump.0, p[1] + bump.1]);
        prop_assert_eq!(hypervolume(&points, &[1.5, 1.5]).unwrap(), hypervolume(&more, &[1.5, 1.5]).unwrap());
    }
}

#[test]
fn pareto_filter_matches_double_loop() {
    assert_eq!(pareto_disagreements(500, 5), 0);
}

#[test]
fn pareto_filter_examples() {
    let pts: Vec<MetricPoint> =
        [[1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [2.5, 2.5]].iter().map(|p| MetricPoint::minimize(p.to_vec())).collect();
    assert_eq!(pareto_filter(&pts).unwrap().non_dominated, vec![true, true, true, false]);
    let one = [MetricPoint::minimize(vec![1.0, 1.0])];
    assert_eq!(pareto_filter(&one).unwrap().non_dominated, vec![true]);
    let dup = [MetricPoint::maximize(vec![0.4, 0.6]), MetricPoint::maximize(vec![0.4, 0.6])];
    assert_eq!(pareto_filter(&dup).unwrap().non_dominated, vec![true, true]);
    let mixed = [MetricPoint::maximize(vec![0.4, 0.6]), MetricPoint::minimize(vec![0.4, 0.6])];
    assert_eq!(pareto_filter(&mixed), Err(MetricError::Inconsistent));
}

#[test]
fn maximized_front_is_mutually_non_dominated() {
    let pts: Vec<MetricPoint> = (0..20)
        .map(|i| {
            let a = i as f64 / 19.0;
            MetricPoint::maximize(vec![a, (1.0 - a * a).sqrt() - 0.05 * ((i * 7) % 3) as f64])
        })
        .collect();
    let set = pareto_filter(&pts).unwrap();
    let front: Vec<&MetricPoint> = set.front().collect();
    for a in &front {
        for b in &front {
            assert!(!a.dominates(b));
        }
    }
}

#[test]
fn delta_m_cases() {
    let base = MetricPoint::maximize(vec![0.5, 0.5]);
    assert_eq!(delta_m(&base, &base).unwrap(), 0.0);
    let sym = delta_m(&MetricPoint::maximize(vec![0.55, 0.45]), &base).unwrap();
    assert!(sym.abs() < 1e-12, "{sym}");
    let single = delta_m(&MetricPoint::maximize(vec![0.55]), &MetricPoint::maximize(vec![0.5])).unwrap();
    assert!((single + 10.0).abs() < 1e-12, "{single}");
    let loss = delta_m(&MetricPoint::minimize(vec![0.9]), &MetricPoint::minimize(vec![1.0])).unwrap();
    assert!((loss + 10.0).abs() < 1e-12);
    assert_eq!(
        delta_m(&MetricPoint::maximize(vec![0.5]), &MetricPoint::maximize(vec![0.0])),
        Err(MetricError::ZeroBaseline(0))
    );
}

proptest! {
    #[test]
    fn delta_m_flips_sign_with_orientation(
        vals in prop::collection::vec((0.1f64..2.0, 0.1f64..2.0, any::<bool>()), 1..6),
    ) {
        let model: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let base: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let orient: Vec<bool> = vals.iter().map(|v| v.2).collect();
        let flipped: Vec<bool> = orient.iter().map(|o| !o).collect();
        let a = delta_m(&MetricPoint::new(model.clone(), orient.clone()).unwrap(), &MetricPoint::new(base.clone(), orient).unwrap()).unwrap();
        let b = delta_m(&MetricPoint::new(model, flipped.clone()).unwrap(), &MetricPoint::new(base, flipped).unwrap()).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}
