use msprobit::distributions::{sample_truncated_normal, std_normal_cdf, std_normal_quantile, Interval, RandomStream};
use msprobit::metrics::{classify, f1_scores, predict_class_probs};
use msprobit::model::ParamDraw;
use nalgebra::DVector;
use proptest::prelude::*;

fn sorted_gammas(raw: Vec<f64>) -> Vec<f64> {
    let mut g = raw;
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn truncated_draws_stay_inside(
        mean in -50.0f64..50.0,
        sd in 0.05f64..20.0,
        lower in -60.0f64..60.0,
        width in 1e-3f64..40.0,
        one_sided in 0u8..3,
        seed in any::<u64>(),
    ) {
        let (lo, hi) = match one_sided {
            0 => (lower, lower + width),
            1 => (lower, f64::INFINITY),
            _ => (f64::NEG_INFINITY, lower),
        };
        let bounds = Interval::new(lo, hi).unwrap();
        let mut rng = RandomStream::new(seed);
        // degenerate intervals may be refused, but never answered wrongly
        if let Ok(x) = sample_truncated_normal(mean, sd * sd, bounds, &mut rng) {
            prop_assert!(lo < x && x < hi, "{x} outside ({lo}, {hi})");
        }
    }

    #[test]
    fn f1_matches_confusion_oracle(
        (k, pairs) in (2usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 1..80)))
    ) {
        let (pred, actual): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let f = f1_scores(&pred, &actual, k).unwrap();
        for c in 0..k {
            let tp = pred.iter().zip(&actual).filter(|(p, a)| **p == c && **a == c).count() as f64;
            let fp = pred.iter().zip(&actual).filter(|(p, a)| **p == c && **a != c).count() as f64;
            let fneg = pred.iter().zip(&actual).filter(|(p, a)| **p != c && **a == c).count() as f64;
            let expected = if tp + fp == 0.0 || tp + fneg == 0.0 {
                0.0
            } else {
                let (pr, re) = (tp / (tp + fp), tp / (tp + fneg));
                if pr + re == 0.0 { 0.0 } else { 2.0 * pr * re / (pr + re) }
            };
            prop_assert_eq!(f.per_class[c], expected);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn class_probabilities_sum_to_one(
        beta in prop::collection::vec(-5.0f64..5.0, 3),
        x in prop::collection::vec(-5.0f64..5.0, 3),
        raw in prop::collection::vec(-30.0f64..30.0, 1..6),
    ) {
        let gammas = sorted_gammas(raw);
        let draw = ParamDraw::new(DVector::from_vec(beta), vec![gammas.clone()]).unwrap();
        let p = predict_class_probs(&draw, &DVector::from_vec(x), 0).unwrap();
        prop_assert_eq!(p.len(), gammas.len() + 1);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn classification_is_monotone_in_the_score(
        raw in prop::collection::vec(-6.0f64..6.0, 1..6),
        a in -10.0f64..10.0,
        step in 0.0f64..5.0,
    ) {
        let gammas = sorted_gammas(raw);
        let x = DVector::from_element(1, 1.0);
        let at = |eta: f64| {
            let draw = ParamDraw::new(DVector::from_element(1, eta), vec![gammas.clone()]).unwrap();
            classify(&draw, &x, 0).unwrap()
        };
        prop_assert!(at(a) <= at(a + step));
    }
}

#[test]
fn cdf_inverts_quantile_on_a_log_grid() {
    for i in 0..=220 {
        let p = 10f64.powf(-12.0 + i as f64 * 12.0 / 220.0);
        for q in [p, 1.0 - p] {
            if q <= 0.0 || q >= 1.0 {
                continue;
            }
            let back = std_normal_cdf(std_normal_quantile(q).unwrap()).unwrap();
            assert!((back - q).abs() < 1e-9, "p = {q}: {back}");
        }
    }
}
