use std::collections::HashSet;

use proptest::prelude::*;

use oer_core::binning::{make_equal_width_partition, make_quantile_partition};
use oer_core::dataio::{parse_dataset, split_dataset, write_dataset, Label, LabeledSample, Schema, ScoredDataset};
use oer_core::featselect::{prior_measure, score_feature, separation_difficulty, BinStrategy, ScoreOptions};
use oer_core::model::{fit_bin_model, gaussian_cdf, BinStats, FitOptions};
use oer_core::oer::{bin_objective, solve_bin_gradient, solve_closed_form_bin, stationarity_residual, SolverConfig};
use oer_core::roc::{auc, auc_pairwise, fixed_threshold_curve, rocch, upper_envelope, OperatingPoint, RocCurve};

fn sample() -> impl Strategy<Value = (bool, f64, f64)> {
    (any::<bool>(), -50.0..50.0f64, -10.0..10.0f64)
}

/// Datasets with both classes and the row index stored as a second feature.
fn dataset(min: usize, max: usize) -> impl Strategy<Value = ScoredDataset> {
    prop::collection::vec(sample(), min..max).prop_map(|rows| {
        let n = rows.len();
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (pos, score, x))| {
                // force both classes
                let pos = if i == 0 { true } else if i == n - 1 { false } else { pos };
                let label = if pos { Label::Positive } else { Label::Negative };
                LabeledSample::new(label, score, vec![x, i as f64])
            })
            .collect();
        ScoredDataset::new(samples, vec!["x".into(), "id".into()]).unwrap()
    })
}

fn bin() -> impl Strategy<Value = BinStats> {
    (-3.0..3.0f64, 0.2..3.0f64, -3.0..3.0f64, 0.2..3.0f64, 0.01..1.0f64, 0.01..1.0f64)
        .prop_map(|(mp, sp, mn, sn, pp, pn)| BinStats::from_params(mp, sp, mn, sn, pp, pn))
}

fn cross(o: &OperatingPoint, a: &OperatingPoint, b: &OperatingPoint) -> f64 {
    (a.fpr - o.fpr) * (b.tpr - o.tpr) - (a.tpr - o.tpr) * (b.fpr - o.fpr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(d in dataset(2, 60)) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d).unwrap();
        let back = parse_dataset(buf.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn folds_partition_the_data(d in dataset(10, 80), folds in 2usize..6, seed in any::<u64>()) {
        let splits = split_dataset(&d, folds, seed).unwrap();
        prop_assert_eq!(splits.len(), folds);
        let mut seen = HashSet::new();
        for (train, test) in &splits {
            prop_assert_eq!(train.len() + test.len(), d.len());
            let test_ids: HashSet<u64> = test.samples().iter().map(|s| s.aux[1] as u64).collect();
            prop_assert!(train.samples().iter().all(|s| !test_ids.contains(&(s.aux[1] as u64))));
            for id in test_ids {
                prop_assert!(seen.insert(id), "sample {} in two test folds", id);
            }
        }
        prop_assert_eq!(seen.len(), d.len());
    }

    #[test]
    fn bin_index_is_monotone(d in dataset(4, 60), bins in 1usize..8, xs in prop::collection::vec(-20.0..20.0f64, 2..20)) {
        let p = make_equal_width_partition(&d, &[0], &[bins]).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let ids: Vec<usize> = xs.iter().map(|&x| p.assign_bin(&[x, 0.0]).unwrap()).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(ids.iter().all(|&b| b < p.num_bins()));
    }

    #[test]
    fn fitted_priors_sum_to_one(d in dataset(4, 80), bins in 1usize..6) {
        let p = make_equal_width_partition(&d, &[0], &[bins]).unwrap();
        let m = fit_bin_model(&d, &p, &FitOptions::default()).unwrap();
        let pos: f64 = m.stats.iter().map(|b| b.p_pos).sum();
        let neg: f64 = m.stats.iter().map(|b| b.p_neg).sum();
        prop_assert!((pos - 1.0).abs() < 1e-12);
        prop_assert!((neg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone(mu in -5.0..5.0f64, sigma in 0.01..5.0f64, a in -20.0..20.0f64, b in -20.0..20.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (f_lo, f_hi) = (gaussian_cdf(lo, mu, sigma).unwrap(), gaussian_cdf(hi, mu, sigma).unwrap());
        prop_assert!(f_lo <= f_hi);
        prop_assert!((0.0..=1.0).contains(&f_lo) && (0.0..=1.0).contains(&f_hi));
    }

    #[test]
    fn class_swap_negates_measures(b in bin()) {
        let swapped = BinStats::from_params(b.mu_neg, b.sigma_neg, b.mu_pos, b.sigma_pos, b.p_neg, b.p_pos);
        let (p, q) = (prior_measure(&b).unwrap(), prior_measure(&swapped).unwrap());
        prop_assert!((p + q).abs() < 1e-12);
        prop_assert!((separation_difficulty(&b) + separation_difficulty(&swapped)).abs() < 1e-12);
    }

    #[test]
    fn quantile_scores_ignore_affine_feature_maps(d in dataset(40, 120), scale in 0.1..10.0f64, shift in -5.0..5.0f64) {
        let moved: Vec<LabeledSample> = d
            .samples()
            .iter()
            .map(|s| LabeledSample::new(s.label, s.score, vec![scale * s.aux[0] + shift, s.aux[1]]))
            .collect();
        let moved = ScoredDataset::new(moved, d.aux_names().to_vec()).unwrap();
        let opts = ScoreOptions { strategy: BinStrategy::Quantile, ..ScoreOptions::default() };
        let a = score_feature(&d, 0, 4, &opts).unwrap();
        let b = score_feature(&moved, 0, 4, &opts).unwrap();
        prop_assert!((a.sd_variance - b.sd_variance).abs() <= 1e-9 * a.sd_variance.max(1.0));
        prop_assert!((a.prior_variance - b.prior_variance).abs() <= 1e-9 * a.prior_variance.max(1.0));
        let (pa, _) = make_quantile_partition(&d, &[0], &[4]).unwrap();
        let (pb, _) = make_quantile_partition(&moved, &[0], &[4]).unwrap();
        for (s, t) in d.samples().iter().zip(moved.samples()) {
            prop_assert_eq!(pa.assign_bin(&s.aux).unwrap(), pb.assign_bin(&t.aux).unwrap());
        }
    }

    #[test]
    fn hull_is_convex_and_dominant(raw in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..40)) {
        let points: Vec<OperatingPoint> = raw.iter().map(|&(f, t)| OperatingPoint::new(f, t)).collect();
        let curve = RocCurve { points: points.clone(), anchored: false };
        let hull = rocch(&[curve]).unwrap();
        let h = &hull.points;
        prop_assert_eq!((h[0].fpr, h[0].tpr), (0.0, 0.0));
        prop_assert_eq!((h[h.len() - 1].fpr, h[h.len() - 1].tpr), (1.0, 1.0));
        prop_assert!(h.windows(3).all(|w| cross(&w[0], &w[1], &w[2]) < 0.0));
        let area = auc(&hull).unwrap();
        let env = upper_envelope(&points);
        prop_assert!(area + 1e-12 >= auc(&env).unwrap());
        for p in &points {
            // every input point lies on or below the hull
            let j = h.iter().position(|q| q.fpr >= p.fpr).unwrap();
            if h[j].fpr > p.fpr {
                let (a, b) = (&h[j - 1], &h[j]);
                let t = a.tpr + (b.tpr - a.tpr) * (p.fpr - a.fpr) / (b.fpr - a.fpr);
                prop_assert!(p.tpr <= t + 1e-12);
            } else {
                let top = h.iter().filter(|q| q.fpr == p.fpr).map(|q| q.tpr).fold(0.0, f64::max);
                prop_assert!(p.tpr <= top + 1e-12);
            }
        }
    }

    #[test]
    fn envelope_is_monotone(raw in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 0..40)) {
        let points: Vec<OperatingPoint> = raw.iter().map(|&(f, t)| OperatingPoint::new(f, t)).collect();
        let env = upper_envelope(&points);
        prop_assert!(env.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        prop_assert_eq!(env.points.len(), points.len() + 2);
    }

    #[test]
    fn trapezoid_matches_pairwise(d in dataset(2, 60)) {
        let area = auc(&fixed_threshold_curve(&d).unwrap()).unwrap();
        let pairs = auc_pairwise(&d, |s| s.score).unwrap();
        prop_assert!(pairs.exact);
        prop_assert!((area - pairs.auc).abs() < 1e-9);
    }

    #[test]
    fn closed_form_is_clamped_and_stationary(b in bin(), log_lambda in -5.0..5.0f64, clamp in 1.0..20.0f64) {
        prop_assume!((b.mu_pos - b.mu_neg).abs() > 1e-3);
        let sigma = b.sigma_pos;
        let eq = BinStats { sigma_neg: sigma, ..b };
        let k = solve_closed_form_bin(&eq, sigma, log_lambda, clamp).unwrap();
        prop_assert!((-clamp..=clamp).contains(&k));
        if k.abs() < clamp {
            let scale = (eq.p_pos + log_lambda.exp() * eq.p_neg) / sigma;
            prop_assert!(stationarity_residual(&eq, log_lambda.exp(), k).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn gradient_agrees_with_closed_form(b in bin(), log_lambda in -3.0..3.0f64) {
        prop_assume!(b.mu_pos - b.mu_neg > 0.1);
        let sigma = b.sigma_pos;
        let eq = BinStats { sigma_neg: sigma, ..b };
        let clamp = 3.0 + 10.0 * sigma;
        let lambda = log_lambda.exp();
        let exact = solve_closed_form_bin(&eq, sigma, log_lambda, clamp).unwrap();
        let sol = solve_bin_gradient(&eq, lambda, 0.0, clamp, 1e-10, &SolverConfig::default());
        prop_assert!(sol.converged);
        let gap = bin_objective(&eq, lambda, exact) - bin_objective(&eq, lambda, sol.k);
        prop_assert!(gap <= 1e-9, "objective gap {}", gap);
    }

    #[test]
    fn threshold_grows_with_lambda(b in bin(), a in -4.0..4.0f64, step in 0.01..3.0f64) {
        prop_assume!(b.mu_pos - b.mu_neg > 1e-3);
        let sigma = b.sigma_pos;
        let eq = BinStats { sigma_neg: sigma, ..b };
        let lo = solve_closed_form_bin(&eq, sigma, a, 50.0).unwrap();
        let hi = solve_closed_form_bin(&eq, sigma, a + step, 50.0).unwrap();
        prop_assert!(lo <= hi);
    }
}
